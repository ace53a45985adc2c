#include <array>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "spcc/pipeline.hpp"
#include "spcc/synthdata.hpp"

using namespace spcc;

namespace {

std::vector<core::CodingConfig> parseChain(const std::string& text) {
  std::vector<core::CodingConfig> chain;
  std::istringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    std::istringstream ps(part);
    std::string qp, sf, sr;
    if (!std::getline(ps, qp, ',') || !std::getline(ps, sf, ',') || !std::getline(ps, sr, ','))
      throw CLI::ValidationError("--chain", "expected 'qp,sf,sr;...' got '" + part + "'");
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(qp);
    trim(sf);
    trim(sr);
    core::CodingConfig cfg;
    cfg.qp = std::stoi(qp);
    cfg.sf = std::stoi(sf);
    if (sr == "T" || sr == "t" || sr == "1")
      cfg.sr = true;
    else if (sr == "F" || sr == "f" || sr == "0")
      cfg.sr = false;
    else
      throw CLI::ValidationError("--chain", "SR must be T/F/1/0, got '" + sr + "'");
    chain.push_back(cfg);
  }
  if (chain.empty()) throw CLI::ValidationError("--chain", "empty chain");
  return chain;
}

// key=value run config; '#' comments; unknown keys rejected.
std::map<std::string, std::string> readRunConfig(const std::string& path,
                                                 const std::set<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineNo) + ": expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    if (!allowed.count(key))
      throw std::runtime_error(path + ":" + std::to_string(lineNo) + ": unknown key '" + key +
                               "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string getOr(const std::map<std::string, std::string>& kv, const std::string& key,
                  const std::string& dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

base::BaseModels loadOrSeedBase(const std::string& prefix, std::uint64_t seed) {
  if (!prefix.empty()) return base::BaseModels::load(prefix);
  base::BaseModels bm;
  for (int qp = 1; qp <= 5; ++qp) bm.at(qp).rngSeed = seed * 10 + std::uint64_t(qp);
  return bm;
}

nn::ParamStore loadOrSeedRq(const std::string& path, std::uint64_t seed) {
  if (!path.empty()) return nn::ParamStore::load(path);
  nn::ParamStore p;
  p.rngSeed = seed ^ 0x5eed5eedull;
  return p;
}

std::vector<core::PointCloud> loadCorpus(const std::map<std::string, std::string>& kv) {
  const std::uint64_t seed = std::stoull(getOr(kv, "seed", "1"));
  const int count = std::stoi(getOr(kv, "corpus_count", "4"));
  const int grid = std::stoi(getOr(kv, "grid", "32"));
  return synth::corpus(seed, count, grid);
}

double seconds(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <class Fn>
double timeMedian3(Fn fn) {
  std::array<double, 3> t{};
  for (double& x : t) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    x = seconds(t0, std::chrono::steady_clock::now());
  }
  std::sort(t.begin(), t.end());
  return t[1];
}

int cmdEncode(const std::string& input, const std::string& output, const std::string& chainText,
              const std::string& models, const std::string& rqulpe, int bs, std::uint64_t seed,
              double scale) {
  const auto chain = parseChain(chainText);
  srqh::validateLayerChain(chain);
  auto bm = loadOrSeedBase(models, seed);
  auto rq = loadOrSeedRq(rqulpe, seed);
  auto pc = io::readPly(input, scale);

  auto enc = pipeline::encodeChain(bm, chain.size() > 1 ? &rq : nullptr, pc, chain, bs);
  auto bytes = io::serialize(enc.container);
  io::writeFile(output, bytes);

  const auto sizes = io::layerSizes(bytes);
  std::cout << "layer,qp,sf,sr,bytes,points\n";
  for (std::size_t i = 0; i < chain.size(); ++i)
    std::cout << i << "," << chain[i].qp << "," << chain[i].sf << "," << (chain[i].sr ? 1 : 0)
              << "," << sizes[i] << "," << enc.reconstructions[i].size() << "\n";
  std::cout << "total," << bytes.size() << " bytes\n";
  return 0;
}

int cmdDecode(const std::string& input, const std::string& output, int layer,
              const std::string& models, const std::string& rqulpe, std::uint64_t seed) {
  auto bytes = io::readFile(input);
  auto c = io::parse(bytes, layer);
  if (layer < 0 || std::size_t(layer) >= c.chain.size())
    throw std::runtime_error("--layer out of range: stream has " +
                             std::to_string(c.chain.size()) + " layers");
  auto bm = loadOrSeedBase(models, seed);
  auto rq = loadOrSeedRq(rqulpe, seed);
  auto dec = pipeline::decodeChain(bm, layer > 0 ? &rq : nullptr, c, layer);
  io::writePly(dec.reconstructed, output);
  std::cout << "decoded layer " << layer << ": " << dec.reconstructed.size() << " points, "
            << io::bytesForLayer(bytes, layer) << " bytes read\n";
  return 0;
}

int cmdTrain(const std::string& configPath) {
  const auto kv = readRunConfig(configPath, {"seed", "corpus_count", "grid", "epochs", "lr", "bs",
                                            "independent", "models_out", "log_out"});
  base::TrainConfig cfg;
  cfg.seed = std::stoull(getOr(kv, "seed", "1"));
  cfg.epochs = std::stoi(getOr(kv, "epochs", "2"));
  cfg.lr = std::stod(getOr(kv, "lr", "1e-3"));
  cfg.bs = std::stoi(getOr(kv, "bs", "32"));
  cfg.independent = getOr(kv, "independent", "0") == "1";
  const std::string modelsOut = getOr(kv, "models_out", "models/base");
  const std::string logOut = getOr(kv, "log_out", "");

  std::vector<core::Block> corpus;
  for (const auto& pc : loadCorpus(kv))
    for (auto& b : core::splitBlocks(pc, cfg.bs)) corpus.push_back(std::move(b));

  std::ostringstream log;
  auto models = base::trainSequential(corpus, cfg, &log);
  models.save(modelsOut);
  if (!logOut.empty()) {
    std::ofstream lf(logOut);
    lf << log.str();
  }
  std::cout << "trained " << corpus.size() << " blocks, models -> " << modelsOut << ".qpN.spcw\n";
  return 0;
}

int cmdTrainRqulpe(const std::string& configPath) {
  const auto kv = readRunConfig(
      configPath, {"seed", "corpus_count", "val_count", "grid", "epochs", "lr", "bs",
                   "steps_per_epoch", "base_models", "rqulpe_out", "log_out"});
  srqh::RqulpeTrainConfig cfg;
  cfg.seed = std::stoull(getOr(kv, "seed", "1"));
  cfg.epochs = std::stoi(getOr(kv, "epochs", "2"));
  cfg.lr = std::stod(getOr(kv, "lr", "1e-3"));
  cfg.stepsPerEpoch = std::stoi(getOr(kv, "steps_per_epoch", "16"));
  const int bs = std::stoi(getOr(kv, "bs", "32"));
  const int valCount = std::stoi(getOr(kv, "val_count", "1"));
  const std::string rqOut = getOr(kv, "rqulpe_out", "models/rqulpe.spcw");
  const std::string logOut = getOr(kv, "log_out", "");

  auto bm = loadOrSeedBase(getOr(kv, "base_models", ""), cfg.seed);
  auto clouds = loadCorpus(kv);
  if (std::size_t(valCount) >= clouds.size())
    throw std::runtime_error("val_count must leave at least one training cloud");
  std::vector<srqh::LatentStore> train, val;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    auto ls = srqh::buildLatentStore(bm, clouds[i], bs);
    (i + std::size_t(valCount) < clouds.size() ? train : val).push_back(std::move(ls));
  }

  std::ostringstream log;
  auto rq = srqh::trainRqulpe(bm, train, val, cfg, &log);
  rq.save(rqOut);
  if (!logOut.empty()) {
    std::ofstream lf(logOut);
    lf << log.str();
  }
  std::cout << "trained rqulpe on " << train.size() << " clouds (" << val.size()
            << " validation), model -> " << rqOut << "\n";
  return 0;
}

void writeMatrixCsv(const std::string& path, const metrics::SimilarityMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (j) out << ",";
      if (m.present[std::size_t(i)][std::size_t(j)])
        out << m.value[std::size_t(i)][std::size_t(j)];
      else
        out << "nan";
    }
    out << "\n";
  }
}

int cmdAnalyze(const std::string& configPath) {
  const auto kv =
      readRunConfig(configPath, {"seed", "corpus_count", "grid", "bs", "models_seq",
                                 "models_ind", "out_prefix"});
  const int bs = std::stoi(getOr(kv, "bs", "32"));
  const std::string outPrefix = getOr(kv, "out_prefix", "analysis");
  auto clouds = loadCorpus(kv);

  for (const std::string mode : {"seq", "ind"}) {
    auto bm = loadOrSeedBase(getOr(kv, mode == "seq" ? "models_seq" : "models_ind", ""),
                             std::stoull(getOr(kv, "seed", "1")) + (mode == "seq" ? 0 : 7777));
    for (const auto [sfS, sfT] : {std::pair{1, 1}, std::pair{2, 1}}) {
      // Mean cosine matrix over the corpus: accumulate per-cloud matrices.
      std::array<std::array<double, 5>, 5> acc{};
      std::array<std::array<int, 5>, 5> n{};
      for (const auto& pc : clouds) {
        auto ls = srqh::buildLatentStore(bm, pc, bs);
        std::array<core::SparseTensor, 5> latS, latT;
        for (int qp = 1; qp <= 5; ++qp) {
          latS[std::size_t(qp - 1)] = ls.yHat[srqh::LatentStore::slot(qp, sfS)];
          latT[std::size_t(qp - 1)] = ls.yHat[srqh::LatentStore::slot(qp, sfT)];
        }
        auto m = metrics::cosineMatrix(latS, latT, sfS, sfT);
        for (int i = 0; i < 5; ++i)
          for (int j = 0; j < 5; ++j)
            if (m.present[std::size_t(i)][std::size_t(j)]) {
              acc[std::size_t(i)][std::size_t(j)] += m.value[std::size_t(i)][std::size_t(j)];
              ++n[std::size_t(i)][std::size_t(j)];
            }
      }
      metrics::SimilarityMatrix mean;
      mean.sfS = sfS;
      mean.sfT = sfT;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          if (n[std::size_t(i)][std::size_t(j)]) {
            mean.value[std::size_t(i)][std::size_t(j)] =
                acc[std::size_t(i)][std::size_t(j)] / n[std::size_t(i)][std::size_t(j)];
            mean.present[std::size_t(i)][std::size_t(j)] = true;
          }
      const std::string path = outPrefix + "_" + mode + "_sf" + std::to_string(sfS) +
                               std::to_string(sfT) + ".csv";
      writeMatrixCsv(path, mean);
      std::cout << "wrote " << path << "\n";
    }
  }
  return 0;
}

int cmdMetrics(const std::string& refPath, const std::string& recPath, double peak,
               std::size_t streamBytes) {
  auto ref = io::readPly(refPath);
  auto rec = io::readPly(recPath);
  if (peak <= 0.0) peak = double((1 << pipeline::gridDepth(ref)) - 1);
  const double d1 = metrics::psnrD1(ref, rec, peak);
  std::size_t degenerate = 0;
  const double d2 = metrics::psnrD2(ref, rec, peak, &degenerate);
  std::cout << "bpp,psnr_d1,psnr_d2,peak\n";
  std::cout << (streamBytes ? metrics::bpp(streamBytes, ref.size()) : 0.0) << "," << d1 << ","
            << d2 << "," << peak << "\n";
  if (degenerate)
    std::cerr << "warning: " << degenerate
              << " points fell back to D1 error (degenerate normal estimate)\n";
  return 0;
}

int cmdBench(const std::string& input, const std::string& chainText, const std::string& models,
             const std::string& rqulpe, int bs, std::uint64_t seed, const std::string& outCsv) {
  const auto chain = parseChain(chainText);
  srqh::validateLayerChain(chain);
  auto bm = loadOrSeedBase(models, seed);
  auto rq = loadOrSeedRq(rqulpe, seed);
  auto pc = io::readPly(input);
  nn::ParamStore* rqp = chain.size() > 1 ? &rq : nullptr;

  const double tEncScalable =
      timeMedian3([&] { pipeline::encodeChain(bm, rqp, pc, chain, bs); });
  double tEncStandaloneSum = 0.0;
  std::vector<double> tDecStandalone;
  for (const auto& cfg : chain) {
    std::vector<core::CodingConfig> single = {cfg};
    tEncStandaloneSum += timeMedian3([&] { pipeline::encodeChain(bm, nullptr, pc, single, bs); });
    auto enc = pipeline::encodeChain(bm, nullptr, pc, single, bs);
    tDecStandalone.push_back(
        timeMedian3([&] { pipeline::decodeChain(bm, nullptr, enc.container, 0); }));
  }

  auto enc = pipeline::encodeChain(bm, rqp, pc, chain, bs);
  std::vector<double> tDecScalable;
  for (std::size_t t = 0; t < chain.size(); ++t)
    tDecScalable.push_back(
        timeMedian3([&] { pipeline::decodeChain(bm, rqp, enc.container, int(t)); }));

  const double tEncExtra = (tEncScalable / tEncStandaloneSum - 1.0) * 100.0;
  std::ostringstream csv;
  csv << "metric,layer,value_pct\n";
  csv << "t_enc_extra,," << tEncExtra << "\n";
  for (std::size_t t = 0; t < chain.size(); ++t)
    csv << "t_dec_extra," << t << "," << (tDecScalable[t] / tDecStandalone[t] - 1.0) * 100.0
        << "\n";
  std::cout << csv.str();
  if (!outCsv.empty()) {
    std::ofstream out(outCsv);
    out << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "spcc: scalable point-cloud geometry codec.\n"
      "Chains are given as --chain \"qp,sf,sr;qp,sf,sr;...\" (sr: T/F or 1/0).\n"
      "NOTE: the SR flag is parsed and stored in the bitstream, but the\n"
      "super-resolution module is out of scope: reconstruction ignores it.\n"
      "--threads is accepted for compatibility; values > 1 currently run the\n"
      "same sequential block loop to keep outputs reproducible."};
  app.require_subcommand(1);

  std::string input, output, chainText, models, rqulpe, config, outCsv;
  int layer = 0, bs = 64, threads = 1;
  std::uint64_t seed = 1;
  double peak = 0.0, scale = 1.0;
  std::size_t streamBytes = 0;

  auto addCommon = [&](CLI::App* c) {
    c->add_option("--threads", threads, "worker threads (default 1, see note above)");
    c->add_option("--seed", seed, "seed for freshly initialized models when no file is given");
  };

  auto* enc = app.add_subcommand("encode", "encode a PLY into a scalable SPCC stream");
  enc->add_option("input", input, "input .ply")->required();
  enc->add_option("output", output, "output .spcc")->required();
  enc->add_option("--chain", chainText, "coding chain \"qp,sf,sr;...\"")->required();
  enc->add_option("--models", models, "base model prefix (prefix.qpN.spcw)");
  enc->add_option("--rqulpe", rqulpe, "RQuLPE model file");
  enc->add_option("--bs", bs, "block size at each coded scale");
  enc->add_option("--scale", scale, "quantization scale applied before voxel rounding");
  addCommon(enc);

  auto* dec = app.add_subcommand("decode", "decode layers 0..t of an SPCC stream");
  dec->add_option("input", input, "input .spcc")->required();
  dec->add_option("output", output, "output .ply")->required();
  dec->add_option("--layer", layer, "last layer to decode (default 0 = base)");
  dec->add_option("--models", models, "base model prefix");
  dec->add_option("--rqulpe", rqulpe, "RQuLPE model file");
  addCommon(dec);

  auto* tr = app.add_subcommand("train", "train the five base models sequentially");
  tr->add_option("--config", config, "run config (key=value lines)")->required();

  auto* trq = app.add_subcommand("train-rqulpe", "train the RQuLPE enhancement models");
  trq->add_option("--config", config, "run config (key=value lines)")->required();

  auto* an = app.add_subcommand("analyze", "emit latent cosine-similarity matrices");
  an->add_option("--config", config, "run config (key=value lines)")->required();

  auto* met = app.add_subcommand("metrics", "D1/D2 PSNR and bpp between two PLY files");
  met->add_option("ref", input, "reference .ply")->required();
  met->add_option("rec", output, "reconstructed .ply")->required();
  met->add_option("--peak", peak, "PSNR peak (default: reference grid span)");
  met->add_option("--bytes", streamBytes, "stream size for bpp (0 to skip)");

  auto* ben = app.add_subcommand("bench", "encode/decode timing overheads vs standalone runs");
  ben->add_option("input", input, "input .ply")->required();
  ben->add_option("--chain", chainText, "coding chain \"qp,sf,sr;...\"")->required();
  ben->add_option("--models", models, "base model prefix");
  ben->add_option("--rqulpe", rqulpe, "RQuLPE model file");
  ben->add_option("--bs", bs, "block size");
  ben->add_option("--out", outCsv, "write the CSV report here too");
  addCommon(ben);

  CLI11_PARSE(app, argc, argv);

  try {
    if (enc->parsed()) return cmdEncode(input, output, chainText, models, rqulpe, bs, seed, scale);
    if (dec->parsed()) return cmdDecode(input, output, layer, models, rqulpe, seed);
    if (tr->parsed()) return cmdTrain(config);
    if (trq->parsed()) return cmdTrainRqulpe(config);
    if (an->parsed()) return cmdAnalyze(config);
    if (met->parsed()) return cmdMetrics(input, output, peak, streamBytes);
    if (ben->parsed()) return cmdBench(input, chainText, models, rqulpe, bs, seed, outCsv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
