#include "netcal/lang.hpp"

#include <arpa/inet.h>

#include <cstdlib>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace netcal {

namespace {

bool parse_ip(const std::string& text, bool& v6, std::uint8_t* bytes) {
  in_addr a4{};
  if (inet_pton(AF_INET, text.c_str(), &a4) == 1) {
    v6 = false;
    std::memcpy(bytes, &a4, 4);
    return true;
  }
  in6_addr a6{};
  if (inet_pton(AF_INET6, text.c_str(), &a6) == 1) {
    v6 = true;
    std::memcpy(bytes, &a6, 16);
    return true;
  }
  return false;
}

}  // namespace

CidrRange CidrRange::parse(const std::string& text) {
  std::size_t slash = text.find('/');
  if (slash == std::string::npos) fail_validation("CIDR '" + text + "' missing prefix length");
  CidrRange r;
  if (!parse_ip(text.substr(0, slash), r.v6, r.addr.data())) {
    fail_validation("CIDR '" + text + "' has an unparseable address");
  }
  char* end = nullptr;
  long bits = std::strtol(text.c_str() + slash + 1, &end, 10);
  long max_bits = r.v6 ? 128 : 32;
  if (*end != '\0' || bits < 0 || bits > max_bits) {
    fail_validation("CIDR '" + text + "' has a bad prefix length");
  }
  r.prefix_len = static_cast<int>(bits);
  r.text = text;
  return r;
}

bool CidrRange::contains(bool addr_v6, const std::uint8_t* bytes) const {
  if (addr_v6 != v6) return false;
  int full = prefix_len / 8;
  if (std::memcmp(bytes, addr.data(), full) != 0) return false;
  int rest = prefix_len % 8;
  if (rest == 0) return true;
  std::uint8_t mask = static_cast<std::uint8_t>(0xff << (8 - rest));
  return (bytes[full] & mask) == (addr[full] & mask);
}

AbstractionRules AbstractionRules::defaults() {
  AbstractionRules rules;
  auto cat = [&](const char* name, std::initializer_list<const char*> cidrs) {
    IpCategory c;
    c.name = name;
    for (const char* s : cidrs) c.ranges.push_back(CidrRange::parse(s));
    rules.ip_categories.push_back(std::move(c));
  };
  cat("Private", {"10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "fc00::/7"});
  cat("Loopback", {"127.0.0.0/8", "::1/128"});
  cat("LinkLocal", {"169.254.0.0/16", "fe80::/10"});
  cat("Multicast", {"224.0.0.0/4", "ff00::/8"});
  cat("Documentation", {"192.0.2.0/24", "198.51.100.0/24", "203.0.113.0/24", "2001:db8::/32"});
  rules.port_buckets = {{"WellKnown", 0, 1023}, {"Registered", 1024, 49151}, {"Dynamic", 49152, 65535}};
  return rules;
}

void AbstractionRules::validate() const {
  if (port_buckets.empty()) fail_validation("no port buckets configured");
  std::uint32_t expect = 0;
  for (const auto& b : port_buckets) {
    if (b.lo != expect || b.hi < b.lo) {
      fail_validation("port buckets do not partition [0,65535] at bucket '" + b.name + "'");
    }
    expect = b.hi + 1;
  }
  if (expect != 65536) fail_validation("port buckets do not cover [0,65535]");
  if (size_small_max >= size_medium_max) {
    fail_validation("size thresholds must be strictly increasing");
  }
  for (const auto& c : ip_categories) {
    if (c.name.empty()) fail_validation("IP category with empty name");
  }
}

AbstractionRules load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open rules file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("rules file '" + path + "': " + e.what());
  }
  AbstractionRules rules = AbstractionRules::defaults();
  try {
    if (j.contains("ip_categories")) {
      rules.ip_categories.clear();
      for (const auto& cj : j.at("ip_categories")) {
        IpCategory c;
        c.name = cj.at("name").get<std::string>();
        for (const auto& s : cj.at("cidrs")) c.ranges.push_back(CidrRange::parse(s.get<std::string>()));
        rules.ip_categories.push_back(std::move(c));
      }
    }
    if (j.contains("port_buckets")) {
      rules.port_buckets.clear();
      for (const auto& bj : j.at("port_buckets")) {
        rules.port_buckets.push_back(
            {bj.at("name").get<std::string>(), bj.at("lo").get<std::uint32_t>(), bj.at("hi").get<std::uint32_t>()});
      }
    }
    if (j.contains("size_buckets")) {
      rules.size_small_max = j.at("size_buckets").at("small_max").get<std::uint64_t>();
      rules.size_medium_max = j.at("size_buckets").at("medium_max").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation("rules file '" + path + "': " + e.what());
  }
  rules.validate();
  return rules;
}

void save_rules(const std::string& path, const AbstractionRules& rules) {
  nlohmann::json j;
  for (const auto& c : rules.ip_categories) {
    nlohmann::json cj;
    cj["name"] = c.name;
    for (const auto& r : c.ranges) cj["cidrs"].push_back(r.text);
    j["ip_categories"].push_back(std::move(cj));
  }
  for (const auto& b : rules.port_buckets) {
    j["port_buckets"].push_back({{"name", b.name}, {"lo", b.lo}, {"hi", b.hi}});
  }
  j["size_buckets"] = {{"small_max", rules.size_small_max}, {"medium_max", rules.size_medium_max}};
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

std::string abstract_ip(const std::string& addr, const AbstractionRules& rules) {
  bool v6 = false;
  std::uint8_t bytes[16] = {};
  if (!parse_ip(addr, v6, bytes)) fail_validation("unparseable IP address '" + addr + "'");
  for (const auto& cat : rules.ip_categories) {
    for (const auto& range : cat.ranges) {
      if (range.contains(v6, bytes)) return cat.name;
    }
  }
  return "Public";
}

std::string abstract_port(std::uint32_t port, const AbstractionRules& rules) {
  for (const auto& b : rules.port_buckets) {
    if (port >= b.lo && port <= b.hi) return b.name;
  }
  fail_validation("port " + std::to_string(port) + " out of range");
}

std::string abstract_size(std::uint64_t size_bytes, const AbstractionRules& rules) {
  if (size_bytes <= rules.size_small_max) return "Small";
  if (size_bytes <= rules.size_medium_max) return "Medium";
  return "Large";
}

std::string tokenize_packet(const PacketRecord& rec, const AbstractionRules& rules) {
  std::string out = to_string(rec.proto);
  out += "|Src";
  out += abstract_ip(rec.src_ip, rules);
  out += '|';
  if (rec.src_port) {
    out += "SrcPort";
    out += abstract_port(*rec.src_port, rules);
  } else {
    out += "PortNone";
  }
  out += "|Dst";
  out += abstract_ip(rec.dst_ip, rules);
  out += '|';
  if (rec.dst_port) {
    out += "DstPort";
    out += abstract_port(*rec.dst_port, rules);
  } else {
    out += "PortNone";
  }
  out += "|Size";
  out += abstract_size(rec.size_bytes, rules);
  out += "|Dir";
  out += to_string(rec.dir);
  return out;
}

std::string tokenize_syscall(const SyscallRecord& rec, const SyscallTable& table) {
  if (rec.category) return *rec.category;
  auto it = table.find(rec.name);
  return it != table.end() ? it->second : rec.name;
}

SyscallTable load_syscall_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open syscall table '" + path + "'");
  SyscallTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      fail_validation("syscall table line " + std::to_string(line_no) + ": expected 'name<TAB>category'");
    }
    table[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return table;
}

Vocabulary Vocabulary::build(std::span<const std::string> stream) {
  Vocabulary v;
  for (const auto& text : stream) v.add(text);
  return v;
}

int Vocabulary::add(const std::string& text) {
  if (text.empty()) fail_validation("empty token text");
  auto [it, inserted] = index_.try_emplace(text, size());
  if (inserted) tokens_.push_back(text);
  return it->second;
}

int Vocabulary::id_of(const std::string& text) const {
  auto it = index_.find(text);
  return it != index_.end() ? it->second : unk_id();
}

bool Vocabulary::contains(const std::string& text) const { return index_.count(text) != 0; }

const std::string& Vocabulary::text_of(int id) const {
  static const std::string unk = kUnkText;
  if (id == unk_id()) return unk;
  if (id < 0 || id > size()) fail_validation("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open vocabulary file '" + path + "'");
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) fail_validation("vocabulary line " + std::to_string(line_no) + " is empty");
    if (v.contains(line)) fail_validation("vocabulary line " + std::to_string(line_no) + " duplicates '" + line + "'");
    v.add(line);
  }
  return v;
}

}  // namespace netcal
