#include "netcal/trace.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>

namespace netcal {

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::TCP: return "TCP";
    case Protocol::UDP: return "UDP";
    case Protocol::ICMP: return "ICMP";
  }
  return "?";
}

const char* to_string(Direction d) {
  return d == Direction::Inbound ? "Inbound" : "Outbound";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "TCP") return Protocol::TCP;
  if (s == "UDP") return Protocol::UDP;
  if (s == "ICMP") return Protocol::ICMP;
  fail_validation("unknown protocol '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
  if (s == "Inbound") return Direction::Inbound;
  if (s == "Outbound") return Direction::Outbound;
  fail_validation("unknown direction '" + s + "'");
}

namespace {

// line_no 0 means the text came from a stream rather than a numbered file.
[[noreturn]] void line_error(std::size_t line_no, const std::string& msg) {
  if (line_no == 0) fail_validation(msg);
  fail_validation("line " + std::to_string(line_no) + ": " + msg);
}

// key=value fields separated by single tabs, every key at most once.
std::map<std::string, std::string> parse_fields(const std::string& line, std::size_t line_no) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t tab = line.find('\t', start);
    std::string field = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
    std::size_t eq = field.find('=');
    if (eq == std::string::npos || eq == 0) line_error(line_no, "field '" + field + "' is not key=value");
    std::string key = field.substr(0, eq);
    if (out.count(key)) line_error(line_no, "duplicate key '" + key + "'");
    out.emplace(std::move(key), field.substr(eq + 1));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_ts(const std::string& v, std::size_t line_no) {
  char* end = nullptr;
  double ts = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || !std::isfinite(ts)) {
    line_error(line_no, "bad timestamp '" + v + "'");
  }
  return ts;
}

std::uint64_t parse_uint(const std::string& v, std::uint64_t max, const char* what,
                         std::size_t line_no) {
  if (v.empty() || v[0] == '-' || v[0] == '+') line_error(line_no, std::string("bad ") + what + " '" + v + "'");
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') line_error(line_no, std::string("bad ") + what + " '" + v + "'");
  if (x > max) {
    line_error(line_no, std::string(what) + " " + v + " out of range (max " + std::to_string(max) + ")");
  }
  return static_cast<std::uint64_t>(x);
}

std::string take(std::map<std::string, std::string>& fields, const char* key, std::size_t line_no) {
  auto it = fields.find(key);
  if (it == fields.end()) line_error(line_no, std::string("missing key '") + key + "'");
  std::string v = std::move(it->second);
  fields.erase(it);
  return v;
}

void reject_leftovers(const std::map<std::string, std::string>& fields, std::size_t line_no) {
  if (!fields.empty()) line_error(line_no, "unknown key '" + fields.begin()->first + "'");
}

void append_kv(std::string& out, const char* key, const std::string& value) {
  if (!out.empty()) out += '\t';
  out += key;
  out += '=';
  out += value;
}

std::string format_ts(double ts) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", ts);
  return buf;
}

}  // namespace

PacketRecord parse_packet_line(const std::string& line, std::size_t line_no) {
  auto fields = parse_fields(line, line_no);
  PacketRecord rec;
  rec.ts = parse_ts(take(fields, "ts", line_no), line_no);
  rec.proto = protocol_from_string(take(fields, "proto", line_no));
  rec.src_ip = take(fields, "src_ip", line_no);
  rec.dst_ip = take(fields, "dst_ip", line_no);
  rec.size_bytes = parse_uint(take(fields, "size", line_no), UINT64_MAX, "size", line_no);
  rec.dir = direction_from_string(take(fields, "dir", line_no));

  bool wants_ports = rec.proto != Protocol::ICMP;
  for (const char* key : {"src_port", "dst_port"}) {
    auto it = fields.find(key);
    if (it == fields.end()) {
      if (wants_ports) line_error(line_no, std::string("missing key '") + key + "' for " + to_string(rec.proto));
      continue;
    }
    if (!wants_ports) line_error(line_no, std::string("key '") + key + "' not allowed for ICMP");
    auto port = static_cast<std::uint16_t>(parse_uint(it->second, 65535, key, line_no));
    (key[0] == 's' ? rec.src_port : rec.dst_port) = port;
    fields.erase(it);
  }

  if (auto it = fields.find("pid"); it != fields.end()) {
    rec.pid = static_cast<std::uint32_t>(parse_uint(it->second, UINT32_MAX, "pid", line_no));
    fields.erase(it);
  }
  reject_leftovers(fields, line_no);
  return rec;
}

SyscallRecord parse_syscall_line(const std::string& line, std::size_t line_no) {
  auto fields = parse_fields(line, line_no);
  SyscallRecord rec;
  rec.ts = parse_ts(take(fields, "ts", line_no), line_no);
  rec.name = take(fields, "name", line_no);
  if (rec.name.empty()) line_error(line_no, "empty syscall name");
  if (auto it = fields.find("pid"); it != fields.end()) {
    rec.pid = static_cast<std::uint32_t>(parse_uint(it->second, UINT32_MAX, "pid", line_no));
    fields.erase(it);
  }
  if (auto it = fields.find("cat"); it != fields.end()) {
    rec.category = it->second;
    fields.erase(it);
  }
  reject_leftovers(fields, line_no);
  return rec;
}

std::string format_record(const PacketRecord& rec) {
  std::string out;
  append_kv(out, "ts", format_ts(rec.ts));
  append_kv(out, "proto", to_string(rec.proto));
  append_kv(out, "src_ip", rec.src_ip);
  if (rec.src_port) append_kv(out, "src_port", std::to_string(*rec.src_port));
  append_kv(out, "dst_ip", rec.dst_ip);
  if (rec.dst_port) append_kv(out, "dst_port", std::to_string(*rec.dst_port));
  append_kv(out, "size", std::to_string(rec.size_bytes));
  append_kv(out, "dir", to_string(rec.dir));
  if (rec.pid) append_kv(out, "pid", std::to_string(*rec.pid));
  return out;
}

std::string format_record(const SyscallRecord& rec) {
  std::string out;
  append_kv(out, "ts", format_ts(rec.ts));
  append_kv(out, "name", rec.name);
  if (rec.pid) append_kv(out, "pid", std::to_string(*rec.pid));
  if (rec.category) append_kv(out, "cat", *rec.category);
  return out;
}

LoadResult load_trace(const std::string& path, TraceKind kind, bool strict) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open trace file '" + path + "'");

  LoadResult result;
  result.trace.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  double prev_ts = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      double ts;
      if (kind == TraceKind::Packet) {
        PacketRecord rec = parse_packet_line(line, line_no);
        ts = rec.ts;
        if (ts < prev_ts) line_error(line_no, "timestamp decreases");
        result.trace.packets.push_back(std::move(rec));
      } else {
        SyscallRecord rec = parse_syscall_line(line, line_no);
        ts = rec.ts;
        if (ts < prev_ts) line_error(line_no, "timestamp decreases");
        result.trace.syscalls.push_back(std::move(rec));
      }
      prev_ts = ts;
    } catch (const Error&) {
      if (strict) throw;
      ++result.malformed_lines;
    }
  }
  if (in.bad()) fail_runtime("I/O error reading '" + path + "'");
  return result;
}

void write_trace(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  if (trace.kind == TraceKind::Packet) {
    for (const auto& rec : trace.packets) out << format_record(rec) << '\n';
  } else {
    for (const auto& rec : trace.syscalls) out << format_record(rec) << '\n';
  }
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

Trace filter_by_pids(const Trace& trace, const std::set<std::uint32_t>& pids) {
  Trace out;
  out.kind = trace.kind;
  out.label = trace.label;
  if (trace.kind == TraceKind::Packet) {
    for (const auto& rec : trace.packets) {
      if (rec.pid && pids.count(*rec.pid)) out.packets.push_back(rec);
    }
  } else {
    for (const auto& rec : trace.syscalls) {
      if (rec.pid && pids.count(*rec.pid)) out.syscalls.push_back(rec);
    }
  }
  return out;
}

}  // namespace netcal
