#pragma once

// ONHPC v1 text format.
//
//   ONHPC 1 <n> <class_code|-> <subject_id|->
//   x y z layer_code [side_code]        (n lines)
//
// Coordinates are written as shortest round-trip decimals, so a write/read
// cycle is lossless. side_code: 0 = anterior, 1 = posterior.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "onh/error.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(context + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s, const std::string& context) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(context + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

inline std::string to_onhpc(const PointCloud& cloud) {
  cloud.validate();
  if (cloud.subject_id) {
    if (cloud.subject_id->empty() ||
        cloud.subject_id->find_first_of(" \t\r\n") != std::string::npos) {
      throw ValidationError("subject id must be nonempty and free of whitespace");
    }
  }
  std::string out = "ONHPC 1 " + std::to_string(cloud.size()) + " ";
  out += cloud.class_label ? std::to_string(class_code(*cloud.class_label)) : "-";
  out += ' ';
  out += cloud.subject_id ? *cloud.subject_id : "-";
  out += '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    append_double(out, p.x);
    out += ' ';
    append_double(out, p.y);
    out += ' ';
    append_double(out, p.z);
    out += ' ';
    out += static_cast<char>('0' + layer_code(p.layer));
    if (cloud.sides) {
      out += ' ';
      out += static_cast<char>('0' + static_cast<int>((*cloud.sides)[i]));
    }
    out += '\n';
  }
  return out;
}

inline PointCloud from_onhpc(std::string_view text, const std::string& source = "<onhpc>") {
  PointCloud cloud;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };
  auto ctx = [&] { return source + ":" + std::to_string(line_no); };

  std::string_view line;
  if (!next_line(line)) throw ValidationError(source + ": empty file");
  auto head = detail::split_ws(line);
  if (head.size() != 5 || head[0] != "ONHPC" || head[1] != "1") {
    throw ValidationError(ctx() + ": expected header 'ONHPC 1 <n> <class|-> <subject|->'");
  }
  const long long n = detail::parse_int(head[2], ctx());
  if (n < 0) throw ValidationError(ctx() + ": negative point count");
  if (head[3] != "-") cloud.class_label = class_from_code(static_cast<int>(detail::parse_int(head[3], ctx())));
  if (head[4] != "-") cloud.subject_id = std::string(head[4]);

  cloud.points.reserve(static_cast<std::size_t>(n));
  std::vector<BoundarySide> sides;
  bool has_sides = false;
  while (next_line(line)) {
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4 && tok.size() != 5) {
      throw ValidationError(ctx() + ": expected 'x y z layer [side]'");
    }
    const bool row_has_side = tok.size() == 5;
    if (cloud.points.empty()) {
      has_sides = row_has_side;
    } else if (row_has_side != has_sides) {
      throw ValidationError(ctx() + ": side code present on some rows only");
    }
    Point p;
    p.x = detail::parse_double(tok[0], ctx());
    p.y = detail::parse_double(tok[1], ctx());
    p.z = detail::parse_double(tok[2], ctx());
    p.layer = layer_from_code(static_cast<int>(detail::parse_int(tok[3], ctx())));
    cloud.points.push_back(p);
    if (row_has_side) {
      const auto s = detail::parse_int(tok[4], ctx());
      if (s != 0 && s != 1) throw ValidationError(ctx() + ": side code must be 0 or 1");
      sides.push_back(static_cast<BoundarySide>(s));
    }
  }
  if (static_cast<long long>(cloud.points.size()) != n) {
    throw ValidationError(source + ": header declares " + std::to_string(n) + " points, found " +
                          std::to_string(cloud.points.size()));
  }
  if (has_sides) cloud.sides = std::move(sides);
  cloud.validate();
  return cloud;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(path, "write failed");
}

inline PointCloud read_onhpc(const std::string& path) { return from_onhpc(read_text_file(path), path); }

inline void write_onhpc(const std::string& path, const PointCloud& cloud) {
  write_text_file(path, to_onhpc(cloud));
}

}  // namespace onh
