#include "netcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "netcal/lang.hpp"

namespace netcal {

namespace {

// Representative field values per category, chosen so tokenization under the
// default rules inverts back to the same category.
const char* ip_for_category(const std::string& cat) {
  if (cat == "Private") return "192.168.1.7";
  if (cat == "Loopback") return "127.0.0.1";
  if (cat == "LinkLocal") return "169.254.0.5";
  if (cat == "Multicast") return "224.0.0.9";
  if (cat == "Documentation") return "192.0.2.8";
  if (cat == "Public") return "8.8.8.8";
  fail_validation("unknown IP category '" + cat + "'");
}

std::uint16_t port_for_bucket(const std::string& bucket) {
  if (bucket == "WellKnown") return 443;
  if (bucket == "Registered") return 8080;
  if (bucket == "Dynamic") return 51000;
  fail_validation("unknown port bucket '" + bucket + "'");
}

std::uint64_t size_for_bucket(const std::string& bucket) {
  if (bucket == "Small") return 64;
  if (bucket == "Medium") return 512;
  if (bucket == "Large") return 1400;
  fail_validation("unknown size bucket '" + bucket + "'");
}

std::vector<std::string> split_token(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t bar = text.find('|', start);
    parts.push_back(text.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return parts;
}

std::string strip_prefix(const std::string& s, const std::string& prefix, const std::string& token) {
  if (s.rfind(prefix, 0) != 0) {
    fail_validation("token '" + token + "': component '" + s + "' missing prefix '" + prefix + "'");
  }
  return s.substr(prefix.size());
}

struct PendingEvent {
  double ts;
  std::size_t source;  // ordinal across benign then anomaly
  std::uint64_t seq;
  int token;
  std::uint32_t pid;
};

// Poisson arrivals gated by the duty cycle: exponential gaps accumulate on
// the active clock, then map onto the wall clock by skipping sleep phases.
void emit_source_events(const SourceModel& src, std::size_t source_ord, double start, double end,
                        std::size_t alphabet_size, std::uint64_t scenario_seed,
                        std::vector<PendingEvent>& out) {
  std::mt19937_64 rng(mix_seed(scenario_seed, mix_seed(src.seed, source_ord)));
  std::exponential_distribution<double> gap(src.rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto draw_from = [&](const Eigen::VectorXd& probs) {
    double u = unif(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs(i);
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  };

  int state = -1;
  if (src.kind == SourceModel::Kind::Markov) {
    if (src.initial.size() > 0) {
      state = draw_from(src.initial);
    } else {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(alphabet_size) - 1);
      state = pick(rng);
    }
  }

  const bool gated = src.active_secs > 0.0;
  const double cycle = src.active_secs + src.sleep_secs;
  double active_clock = 0.0;
  std::uint64_t seq = 0;
  for (;;) {
    active_clock += gap(rng);
    double ts;
    if (gated) {
      double full_cycles = std::floor(active_clock / src.active_secs);
      double remainder = active_clock - full_cycles * src.active_secs;
      ts = start + full_cycles * cycle + remainder;
    } else {
      ts = start + active_clock;
    }
    if (ts >= end) break;

    int token;
    if (src.kind == SourceModel::Kind::Markov) {
      token = state;
      state = draw_from(src.transition.row(state).transpose());
    } else {
      token = draw_from(src.probs);
    }
    out.push_back({ts, source_ord, seq++, token, src.pid});
  }
}

Eigen::VectorXd json_to_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

SourceModel source_from_json(const nlohmann::json& j) {
  SourceModel src;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "markov") {
    src.kind = SourceModel::Kind::Markov;
    const auto& rows = j.at("transition");
    src.transition.resize(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(src.transition.cols())) {
        fail_validation("transition matrix rows have uneven lengths");
      }
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        src.transition(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
      }
    }
    if (j.contains("initial")) src.initial = json_to_vector(j.at("initial"));
  } else if (kind == "iid") {
    src.kind = SourceModel::Kind::IID;
    src.probs = json_to_vector(j.at("probs"));
  } else {
    fail_validation("unknown source kind '" + kind + "'");
  }
  src.rate = j.at("rate").get<double>();
  src.pid = j.at("pid").get<std::uint32_t>();
  if (j.contains("seed")) src.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("active_secs")) src.active_secs = j.at("active_secs").get<double>();
  if (j.contains("sleep_secs")) src.sleep_secs = j.at("sleep_secs").get<double>();
  return src;
}

}  // namespace

void SourceModel::validate(std::size_t alphabet_size) const {
  if (!(rate > 0.0)) fail_validation("source rate must be positive");
  auto n = static_cast<Eigen::Index>(alphabet_size);
  if (kind == Kind::Markov) {
    if (transition.rows() != n || transition.cols() != n) {
      fail_validation("transition matrix does not match the alphabet size");
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      double sum = transition.row(r).sum();
      if (std::abs(sum - 1.0) > 1e-9 || transition.row(r).minCoeff() < 0.0) {
        fail_validation("transition row " + std::to_string(r) + " is not a distribution");
      }
    }
    if (initial.size() > 0 && (initial.size() != n || std::abs(initial.sum() - 1.0) > 1e-9)) {
      fail_validation("initial distribution does not match the alphabet");
    }
  } else {
    if (probs.size() != n || std::abs(probs.sum() - 1.0) > 1e-9 || probs.minCoeff() < 0.0) {
      fail_validation("category distribution does not match the alphabet");
    }
  }
  if (active_secs < 0.0 || sleep_secs < 0.0) fail_validation("duty cycle durations must be non-negative");
}

SourceModel duty_cycle_source(double active_secs, double sleep_secs, SourceModel base) {
  if (!(active_secs > 0.0)) fail_validation("active phase must be positive");
  if (sleep_secs < 0.0) fail_validation("sleep phase must be non-negative");
  base.active_secs = sleep_secs == 0.0 ? 0.0 : active_secs;  // zero sleep degenerates to the base
  base.sleep_secs = sleep_secs;
  return base;
}

void Scenario::validate() const {
  if (alphabet.empty()) fail_validation("scenario alphabet is empty");
  if (benign_sources.empty() && !anomaly_source) fail_validation("scenario has no sources");
  if (!(duration > 0.0)) fail_validation("scenario duration must be positive");
  if (anomaly_source && !(injection_time < duration)) {
    fail_validation("injection time must fall inside the scenario duration");
  }
  for (const auto& s : benign_sources) s.validate(alphabet.size());
  if (anomaly_source) anomaly_source->validate(alphabet.size());
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("scenario file '" + path + "': " + e.what());
  }
  Scenario sc;
  try {
    for (const auto& t : j.at("alphabet")) sc.alphabet.push_back(t.get<std::string>());
    for (const auto& s : j.at("benign_sources")) sc.benign_sources.push_back(source_from_json(s));
    if (j.contains("anomaly_source") && !j.at("anomaly_source").is_null()) {
      sc.anomaly_source = source_from_json(j.at("anomaly_source"));
    }
    sc.injection_time = j.value("injection_time", 0.0);
    sc.duration = j.at("duration").get<double>();
    sc.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    fail_validation("scenario file '" + path + "': " + e.what());
  }
  sc.validate();
  return sc;
}

Trace generate(const Scenario& scenario, TraceKind kind) {
  scenario.validate();

  std::vector<PendingEvent> events;
  std::size_t ord = 0;
  for (const auto& src : scenario.benign_sources) {
    emit_source_events(src, ord++, 0.0, scenario.duration, scenario.alphabet.size(), scenario.seed,
                       events);
  }
  if (scenario.anomaly_source) {
    emit_source_events(*scenario.anomaly_source, ord++, scenario.injection_time, scenario.duration,
                       scenario.alphabet.size(), scenario.seed, events);
  }

  std::sort(events.begin(), events.end(), [](const PendingEvent& a, const PendingEvent& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.source != b.source) return a.source < b.source;
    return a.seq < b.seq;
  });

  Trace trace;
  trace.kind = kind;
  for (const auto& ev : events) {
    const std::string& text = scenario.alphabet[static_cast<std::size_t>(ev.token)];
    if (kind == TraceKind::Packet) {
      trace.packets.push_back(packet_for_token(text, ev.ts, ev.pid));
    } else {
      SyscallRecord rec;
      rec.ts = ev.ts;
      rec.name = text;
      rec.pid = ev.pid;
      trace.syscalls.push_back(std::move(rec));
    }
  }
  return trace;
}

std::vector<std::string> enumerate_packet_tokens() {
  const std::vector<std::string> protos = {"TCP", "UDP", "ICMP"};
  const std::vector<std::string> ip_cats = {"Private",   "Loopback",      "LinkLocal",
                                            "Multicast", "Documentation", "Public"};
  const std::vector<std::string> ports = {"WellKnown", "Registered", "Dynamic"};
  const std::vector<std::string> sizes = {"Small", "Medium", "Large"};
  const std::vector<std::string> dirs = {"Inbound", "Outbound"};

  std::vector<std::string> out;
  for (const auto& proto : protos) {
    bool with_ports = proto != "ICMP";
    for (const auto& src_ip : ip_cats) {
      for (std::size_t sp = 0; sp < (with_ports ? ports.size() : 1); ++sp) {
        for (const auto& dst_ip : ip_cats) {
          for (std::size_t dp = 0; dp < (with_ports ? ports.size() : 1); ++dp) {
            for (const auto& size : sizes) {
              for (const auto& dir : dirs) {
                std::string token = proto + "|Src" + src_ip + '|';
                token += with_ports ? "SrcPort" + ports[sp] : std::string("PortNone");
                token += "|Dst" + dst_ip + '|';
                token += with_ports ? "DstPort" + ports[dp] : std::string("PortNone");
                token += "|Size" + size + "|Dir" + dir;
                out.push_back(std::move(token));
              }
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<std::string> packet_alphabet(std::size_t n) {
  auto all = enumerate_packet_tokens();
  if (n == 0 || n > all.size()) fail_validation("packet alphabet size out of range");
  std::vector<std::string> out;
  out.reserve(n);
  std::size_t stride = all.size() / n;
  for (std::size_t i = 0; i < n; ++i) out.push_back(all[i * stride]);
  return out;
}

PacketRecord packet_for_token(const std::string& token_text, double ts, std::uint32_t pid) {
  auto parts = split_token(token_text);
  if (parts.size() != 7) fail_validation("token '" + token_text + "' does not have 7 components");

  PacketRecord rec;
  rec.ts = ts;
  rec.pid = pid;
  rec.proto = protocol_from_string(parts[0]);
  rec.src_ip = ip_for_category(strip_prefix(parts[1], "Src", token_text));
  rec.dst_ip = ip_for_category(strip_prefix(parts[3], "Dst", token_text));
  if (rec.proto == Protocol::ICMP) {
    if (parts[2] != "PortNone" || parts[4] != "PortNone") {
      fail_validation("ICMP token '" + token_text + "' must use PortNone");
    }
  } else {
    rec.src_port = port_for_bucket(strip_prefix(parts[2], "SrcPort", token_text));
    rec.dst_port = port_for_bucket(strip_prefix(parts[4], "DstPort", token_text));
  }
  rec.size_bytes = size_for_bucket(strip_prefix(parts[5], "Size", token_text));
  rec.dir = direction_from_string(strip_prefix(parts[6], "Dir", token_text));
  return rec;
}

}  // namespace netcal
