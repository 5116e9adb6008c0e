#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "netcal/trace.hpp"

namespace netcal {

// A parsed CIDR block, stored as raw bytes so IPv4 and IPv6 share one code path.
struct CidrRange {
  bool v6 = false;
  std::array<std::uint8_t, 16> addr{};
  int prefix_len = 0;
  std::string text;  // original spelling, kept for serialization

  static CidrRange parse(const std::string& text);
  bool contains(bool addr_v6, const std::uint8_t* bytes) const;
};

struct IpCategory {
  std::string name;
  std::vector<CidrRange> ranges;
};

struct PortBucket {
  std::string name;
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;  // inclusive
};

// Deterministic bucketing rules for packet header fields. IP categories are
// checked in listed order, first match wins, with Public as the fallback.
struct AbstractionRules {
  std::vector<IpCategory> ip_categories;
  std::vector<PortBucket> port_buckets;
  std::uint64_t size_small_max = 128;    // Small: size <= small_max
  std::uint64_t size_medium_max = 1024;  // Medium: small_max < size <= medium_max

  static AbstractionRules defaults();
  void validate() const;  // port buckets must partition [0,65535], thresholds increase
};

AbstractionRules load_rules(const std::string& path);
void save_rules(const std::string& path, const AbstractionRules& rules);

std::string abstract_ip(const std::string& addr, const AbstractionRules& rules);
std::string abstract_port(std::uint32_t port, const AbstractionRules& rules);
std::string abstract_size(std::uint64_t size_bytes, const AbstractionRules& rules);

// One token per packet:
//   PROTO|Src<IpCat>|SrcPort<Bucket>|Dst<IpCat>|DstPort<Bucket>|Size<Bucket>|Dir<Direction>
// ICMP carries no ports; both port slots read "PortNone".
std::string tokenize_packet(const PacketRecord& rec, const AbstractionRules& rules);

using SyscallTable = std::unordered_map<std::string, std::string>;

// name -> category lookup; unmapped names pass through unchanged. A record
// that arrived pre-categorized keeps its category.
std::string tokenize_syscall(const SyscallRecord& rec, const SyscallTable& table);

SyscallTable load_syscall_table(const std::string& path);

// Distinct token texts in first-seen order with dense ids 0..N-1. Text never
// seen during construction resolves to the reserved UNK id N at lookup time.
class Vocabulary {
 public:
  static constexpr const char* kUnkText = "<UNK>";

  Vocabulary() = default;

  static Vocabulary build(std::span<const std::string> stream);

  // Returns the id, inserting the text if new.
  int add(const std::string& text);

  // Total lookup: unseen text maps to unk_id().
  int id_of(const std::string& text) const;
  bool contains(const std::string& text) const;
  const std::string& text_of(int id) const;  // unk_id() yields kUnkText

  int size() const { return static_cast<int>(tokens_.size()); }
  int unk_id() const { return size(); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace netcal
