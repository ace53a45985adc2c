#include "spcc/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace spcc::io {

using core::PointCloud;

namespace {

[[noreturn]] void fail(const std::string& what, std::size_t line) {
  throw ParseError("PLY parse error at line " + std::to_string(line) + ": " + what);
}

struct Property {
  std::string type;
  std::string name;
};

std::size_t typeSize(const std::string& t, std::size_t line) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  fail("unsupported property type '" + t + "'", line);
}

double readBinaryValue(std::istream& in, const std::string& t, std::size_t line) {
  char buf[8];
  in.read(buf, std::streamsize(typeSize(t, line)));
  if (!in) fail("unexpected end of binary payload", line);
  auto as = [&]<class T>(T) {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return double(v);
  };
  if (t == "char" || t == "int8") return as(std::int8_t{});
  if (t == "uchar" || t == "uint8") return as(std::uint8_t{});
  if (t == "short" || t == "int16") return as(std::int16_t{});
  if (t == "ushort" || t == "uint16") return as(std::uint16_t{});
  if (t == "int" || t == "int32") return as(std::int32_t{});
  if (t == "uint" || t == "uint32") return as(std::uint32_t{});
  if (t == "float" || t == "float32") return as(float{});
  return as(double{});
}

std::int32_t voxelize(double v, double scale, std::size_t line) {
  const double s = std::round(v * scale);
  if (!(s >= 0.0) || s > double(core::kCoordMax))
    fail("coordinate " + std::to_string(v) + " outside the voxel grid", line);
  return std::int32_t(s);
}

}  // namespace

PointCloud readPly(const std::string& path, double scale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::size_t lineNo = 0;
  auto nextLine = [&]() {
    std::string l;
    if (!std::getline(in, l)) fail("unexpected end of header", lineNo);
    if (!l.empty() && l.back() == '\r') l.pop_back();
    ++lineNo;
    return l;
  };

  if (nextLine() != "ply") fail("missing 'ply' magic", lineNo);
  bool binary = false;
  bool haveFormat = false;
  std::size_t vertexCount = 0;
  std::vector<Property> props;
  bool inVertexElement = false;

  for (;;) {
    std::string l = nextLine();
    std::istringstream ls(l);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        fail("unsupported format '" + fmt + "'", lineNo);
      haveFormat = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      inVertexElement = name == "vertex";
      if (inVertexElement) vertexCount = count;
      if (!inVertexElement && count > 0 && !props.empty())
        fail("elements after 'vertex' are not supported", lineNo);
    } else if (tok == "property") {
      std::string type;
      ls >> type;
      if (type == "list") fail("list properties are not supported", lineNo);
      std::string name;
      ls >> name;
      if (inVertexElement) {
        typeSize(type, lineNo);
        props.push_back({type, name});
      }
    } else if (tok == "end_header") {
      break;
    } else {
      fail("unknown header token '" + tok + "'", lineNo);
    }
  }
  if (!haveFormat) fail("missing 'format' line", lineNo);

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const auto& n = props[i].name;
    if (n == "x") ix = int(i);
    if (n == "y") iy = int(i);
    if (n == "z") iz = int(i);
    if (n == "nx") inx = int(i);
    if (n == "ny") iny = int(i);
    if (n == "nz") inz = int(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x/y/z properties", lineNo);
  const bool hasNormals = inx >= 0 && iny >= 0 && inz >= 0;

  std::vector<std::pair<std::uint64_t, std::array<double, 3>>> rows;
  std::vector<double> vals(props.size());
  for (std::size_t v = 0; v < vertexCount; ++v) {
    if (binary) {
      for (std::size_t i = 0; i < props.size(); ++i)
        vals[i] = readBinaryValue(in, props[i].type, lineNo);
    } else {
      std::string l = nextLine();
      std::istringstream ls(l);
      for (std::size_t i = 0; i < props.size(); ++i)
        if (!(ls >> vals[i])) fail("short vertex row", lineNo);
    }
    const core::VoxelCoord c = {voxelize(vals[std::size_t(ix)], scale, lineNo),
                                voxelize(vals[std::size_t(iy)], scale, lineNo),
                                voxelize(vals[std::size_t(iz)], scale, lineNo)};
    std::array<double, 3> n = {0, 0, 0};
    if (hasNormals)
      n = {vals[std::size_t(inx)], vals[std::size_t(iny)], vals[std::size_t(inz)]};
    rows.emplace_back(core::packCoord(c), n);
  }

  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const auto& a, const auto& b) { return a.first == b.first; }),
             rows.end());
  PointCloud pc;
  for (const auto& [key, n] : rows) {
    pc.points.push_back(core::unpackCoord(key));
    if (hasNormals) pc.normals.push_back(n);
  }
  return pc;
}

void writePly(const PointCloud& pc, const std::string& path, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  const bool hasNormals = pc.normals.size() == pc.size();
  out << std::setprecision(17);
  out << "ply\n"
      << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << pc.size() << "\n"
      << "property int x\nproperty int y\nproperty int z\n";
  if (hasNormals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.points[i];
    if (binary) {
      std::int32_t v[3] = {p.x, p.y, p.z};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
      if (hasNormals)
        out.write(reinterpret_cast<const char*>(pc.normals[i].data()), 3 * sizeof(double));
    } else {
      out << p.x << " " << p.y << " " << p.z;
      if (hasNormals)
        out << " " << pc.normals[i][0] << " " << pc.normals[i][1] << " " << pc.normals[i][2];
      out << "\n";
    }
  }
  if (!out) throw ParseError("write failure on '" + path + "'");
}

void writeFile(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw ParseError("write failure on '" + path + "'");
}

std::vector<std::uint8_t> readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace spcc::io
