#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netcal/common.hpp"

namespace netcal {

enum class Protocol { TCP, UDP, ICMP };
enum class Direction { Inbound, Outbound };
enum class TraceKind { Packet, Syscall };

const char* to_string(Protocol p);
const char* to_string(Direction d);
Protocol protocol_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

struct PacketRecord {
  double ts = 0.0;  // seconds since epoch, microsecond precision
  Protocol proto = Protocol::TCP;
  std::string src_ip;
  std::optional<std::uint16_t> src_port;  // present iff proto is TCP or UDP
  std::string dst_ip;
  std::optional<std::uint16_t> dst_port;
  std::uint64_t size_bytes = 0;
  Direction dir = Direction::Outbound;
  std::optional<std::uint32_t> pid;
};

struct SyscallRecord {
  double ts = 0.0;
  std::string name;
  std::optional<std::uint32_t> pid;
  std::optional<std::string> category;  // set when the sensor pre-mapped the call
};

// A homogeneous, time-ordered event sequence. The label is metadata for
// evaluation bookkeeping and is never consumed by training code.
struct Trace {
  TraceKind kind = TraceKind::Packet;
  std::vector<PacketRecord> packets;
  std::vector<SyscallRecord> syscalls;
  std::string label = "benign";

  std::size_t size() const {
    return kind == TraceKind::Packet ? packets.size() : syscalls.size();
  }
};

struct LoadResult {
  Trace trace;
  std::size_t malformed_lines = 0;  // only populated when strict=false
};

// Parses the tab-separated key=value trace format. In strict mode (the
// default) any malformed line aborts the load with an error naming the line;
// otherwise malformed lines are skipped and counted.
LoadResult load_trace(const std::string& path, TraceKind kind, bool strict = true);

// Parses a single record line. Returns the 1-based line number in error text.
PacketRecord parse_packet_line(const std::string& line, std::size_t line_no);
SyscallRecord parse_syscall_line(const std::string& line, std::size_t line_no);

std::string format_record(const PacketRecord& rec);
std::string format_record(const SyscallRecord& rec);

void write_trace(const std::string& path, const Trace& trace);

// Keeps exactly the records whose pid is in `pids`, preserving order.
// Records without a pid cannot be attributed and are dropped.
Trace filter_by_pids(const Trace& trace, const std::set<std::uint32_t>& pids);

}  // namespace netcal
