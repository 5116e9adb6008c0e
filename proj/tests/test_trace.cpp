#include "netcal/trace.hpp"

#include <random>

#include "doctest.h"
#include "test_util.hpp"

using namespace netcal;

namespace {

const char* kPacketLines =
    "ts=1700000000.000100\tproto=TCP\tsrc_ip=192.168.1.5\tsrc_port=51500\tdst_ip=8.8.8.8\t"
    "dst_port=443\tsize=1400\tdir=Outbound\tpid=101\n"
    "ts=1700000000.000200\tproto=UDP\tsrc_ip=10.0.0.2\tsrc_port=5353\tdst_ip=224.0.0.251\t"
    "dst_port=5353\tsize=120\tdir=Outbound\n"
    "ts=1700000000.000300\tproto=ICMP\tsrc_ip=192.168.1.5\tdst_ip=192.168.1.1\tsize=64\t"
    "dir=Outbound\tpid=102\n";

}  // namespace

TEST_CASE("empty file loads as an empty trace") {
  testutil::TempDir tmp;
  auto path = tmp.write("empty.trace", "");
  auto result = load_trace(path, TraceKind::Packet);
  CHECK(result.trace.size() == 0);
  CHECK(result.malformed_lines == 0);
}

TEST_CASE("well-formed packet file parses in order") {
  testutil::TempDir tmp;
  auto path = tmp.write("three.trace", kPacketLines);
  auto result = load_trace(path, TraceKind::Packet);
  REQUIRE(result.trace.packets.size() == 3);
  CHECK(result.trace.packets[0].proto == Protocol::TCP);
  CHECK(result.trace.packets[0].src_port == 51500);
  CHECK(result.trace.packets[1].pid == std::nullopt);
  CHECK(result.trace.packets[2].proto == Protocol::ICMP);
  CHECK(result.trace.packets[2].src_port == std::nullopt);
  CHECK(result.trace.packets[0].ts < result.trace.packets[1].ts);
}

TEST_CASE("port out of range is a parse error naming the line") {
  testutil::TempDir tmp;
  auto path = tmp.write("bad.trace",
                        "ts=1.000000\tproto=TCP\tsrc_ip=1.2.3.4\tsrc_port=70000\tdst_ip=5.6.7.8\t"
                        "dst_port=80\tsize=100\tdir=Inbound\n");
  CHECK_THROWS_WITH_AS(load_trace(path, TraceKind::Packet),
                       doctest::Contains("line 1"), Error);
}

TEST_CASE("malformed lines abort strict loads and are counted otherwise") {
  testutil::TempDir tmp;
  std::string content = std::string(kPacketLines) + "ts=garbage\n";
  auto path = tmp.write("mixed.trace", content);
  CHECK_THROWS_AS(load_trace(path, TraceKind::Packet), Error);
  auto lenient = load_trace(path, TraceKind::Packet, /*strict=*/false);
  CHECK(lenient.trace.packets.size() == 3);
  CHECK(lenient.malformed_lines == 1);
}

TEST_CASE("schema violations are rejected") {
  testutil::TempDir tmp;
  SUBCASE("ICMP with ports") {
    auto path = tmp.write("icmp.trace",
                          "ts=1.000000\tproto=ICMP\tsrc_ip=1.2.3.4\tsrc_port=1\tdst_ip=5.6.7.8\t"
                          "size=10\tdir=Inbound\n");
    CHECK_THROWS_AS(load_trace(path, TraceKind::Packet), Error);
  }
  SUBCASE("TCP missing ports") {
    auto path = tmp.write("noport.trace",
                          "ts=1.000000\tproto=TCP\tsrc_ip=1.2.3.4\tdst_ip=5.6.7.8\tsize=10\tdir=Inbound\n");
    CHECK_THROWS_AS(load_trace(path, TraceKind::Packet), Error);
  }
  SUBCASE("unknown key") {
    auto path = tmp.write("extra.trace",
                          "ts=1.000000\tproto=ICMP\tsrc_ip=1.2.3.4\tdst_ip=5.6.7.8\tsize=10\t"
                          "dir=Inbound\tbogus=1\n");
    CHECK_THROWS_AS(load_trace(path, TraceKind::Packet), Error);
  }
  SUBCASE("negative size") {
    auto path = tmp.write("negsize.trace",
                          "ts=1.000000\tproto=ICMP\tsrc_ip=1.2.3.4\tdst_ip=5.6.7.8\tsize=-4\t"
                          "dir=Inbound\n");
    CHECK_THROWS_AS(load_trace(path, TraceKind::Packet), Error);
  }
}

TEST_CASE("out-of-order timestamps are rejected, not sorted") {
  testutil::TempDir tmp;
  auto path = tmp.write("ooo.trace",
                        "ts=2.000000\tname=openat\n"
                        "ts=1.000000\tname=close\n");
  CHECK_THROWS_WITH_AS(load_trace(path, TraceKind::Syscall), doctest::Contains("line 2"), Error);
}

TEST_CASE("missing file is an error") {
  CHECK_THROWS_AS(load_trace("/nonexistent/file.trace", TraceKind::Packet), Error);
}

TEST_CASE("write after load reproduces the file byte for byte") {
  testutil::TempDir tmp;
  auto path = tmp.write("orig.trace", kPacketLines);
  auto loaded = load_trace(path, TraceKind::Packet);
  auto out_path = tmp.file("rewritten.trace");
  write_trace(out_path, loaded.trace);
  CHECK(testutil::slurp(out_path) == kPacketLines);

  SUBCASE("syscall round trip") {
    const char* syscall_lines =
        "ts=10.500000\tname=openat\tpid=7\tcat=FileAccess\n"
        "ts=10.600000\tname=socket\tpid=7\n"
        "ts=10.700000\tname=custom_call\n";
    auto spath = tmp.write("sys.trace", syscall_lines);
    auto strace = load_trace(spath, TraceKind::Syscall);
    auto sout = tmp.file("sys_rewritten.trace");
    write_trace(sout, strace.trace);
    CHECK(testutil::slurp(sout) == syscall_lines);
  }
}

TEST_CASE("pid filtering") {
  Trace trace;
  trace.kind = TraceKind::Syscall;
  auto add = [&](double ts, std::optional<std::uint32_t> pid) {
    SyscallRecord rec;
    rec.ts = ts;
    rec.name = "call" + std::to_string(trace.syscalls.size());
    rec.pid = pid;
    trace.syscalls.push_back(rec);
  };
  add(1, 1);
  add(2, 1);
  add(3, 2);
  add(4, 3);
  add(5, std::nullopt);

  SUBCASE("empty filter drops everything") {
    CHECK(filter_by_pids(trace, {}).size() == 0);
  }
  SUBCASE("full filter keeps attributed records") {
    auto out = filter_by_pids(trace, {1, 2, 3});
    CHECK(out.size() == 4);  // the pid-less record cannot be attributed
  }
  SUBCASE("subset keeps order") {
    auto out = filter_by_pids(trace, {2, 3});
    REQUIRE(out.syscalls.size() == 2);
    CHECK(out.syscalls[0].name == "call2");
    CHECK(out.syscalls[1].name == "call3");
  }
  SUBCASE("idempotent and intersects") {
    auto once = filter_by_pids(trace, {1, 2});
    auto twice = filter_by_pids(once, {1, 2});
    CHECK(once.size() == twice.size());
    auto nested = filter_by_pids(filter_by_pids(trace, {1, 2}), {2, 3});
    auto direct = filter_by_pids(trace, {2});
    REQUIRE(nested.syscalls.size() == direct.syscalls.size());
    for (std::size_t i = 0; i < nested.syscalls.size(); ++i) {
      CHECK(nested.syscalls[i].name == direct.syscalls[i].name);
    }
  }
}
