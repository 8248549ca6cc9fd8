// Copyright 2026 The Blockstream Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bst/latency.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bst/core.hpp"

namespace bst {

double SteadyClock::now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
      .count();
}

void EmissionLog::validate() const {
  double prev = -kInf;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.position != static_cast<int>(i) + 1) {
      throw Error("emission log: position " + std::to_string(e.position) + " at index " +
                  std::to_string(i));
    }
    if (e.source_ms < prev) throw Error("emission log: source_ms decreases at position " +
                                        std::to_string(e.position));
    if (e.source_ms > source_total_ms) {
      throw Error("emission log: source_ms exceeds source_total_ms at position " +
                  std::to_string(e.position));
    }
    prev = e.source_ms;
  }
}

double average_lagging(const EmissionLog& log) {
  if (log.events.empty()) throw Error("average_lagging: empty emission log");
  const double source = log.source_total_ms;
  const double rate = source / static_cast<double>(log.events.size());
  std::size_t tau = log.events.size();
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    if (log.events[i].source_ms >= source) {
      tau = i + 1;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tau; ++i) {
    sum += log.events[i].source_ms - static_cast<double>(i) * rate;
  }
  return sum / static_cast<double>(tau);
}

EndpointLatency endpoint_latency(const EmissionLog& log) {
  const double ep = log.completion_wall_ms - log.source_end_wall_ms;
  if (ep < 0.0) {
    std::cerr << "warning: decode completed " << -ep
              << " ms before the end of the source; endpoint latency clamped to 0\n";
    return {0.0, true};
  }
  return {ep, false};
}

LatencyReport make_latency_report(const EmissionLog& log, int wait_events) {
  LatencyReport r;
  r.average_lagging_ms = average_lagging(log);
  const EndpointLatency ep = endpoint_latency(log);
  r.endpoint_ms = ep.ms;
  r.endpoint_clamped = ep.clamped;
  r.wait_events = wait_events;
  r.tokens = static_cast<int>(log.events.size());
  for (const auto& e : log.events) {
    if (e.source_ms < log.source_total_ms) ++r.tokens_before_source_end;
  }
  return r;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw Error("not a number: '" + s + "'");
  return v;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double header_value(const std::string& field, const std::string& key, int line_no) {
  if (field.rfind(key + "=", 0) != 0) {
    throw Error("emission log line " + std::to_string(line_no) + ": expected " + key + "=");
  }
  return parse_double(field.substr(key.size() + 1));
}

}  // namespace

void write_emission_log(const EmissionLog& log, std::ostream& out) {
  out << "#source_total_ms=" << format_double(log.source_total_ms)
      << "\tsource_end_wall_ms=" << format_double(log.source_end_wall_ms)
      << "\tcompletion_wall_ms=" << format_double(log.completion_wall_ms) << '\n';
  for (const auto& e : log.events) {
    out << e.position << '\t' << e.token << '\t' << e.block << '\t' << format_double(e.source_ms)
        << '\t' << format_double(e.wall_ms) << '\n';
  }
}

EmissionLog read_emission_log(std::istream& in) {
  EmissionLog log;
  std::string line;
  if (!std::getline(in, line) || line.empty() || line[0] != '#') {
    throw Error("emission log line 1: missing header");
  }
  const auto header = split_tabs(line.substr(1));
  if (header.size() != 3) throw Error("emission log line 1: expected 3 header fields");
  log.source_total_ms = header_value(header[0], "source_total_ms", 1);
  log.source_end_wall_ms = header_value(header[1], "source_end_wall_ms", 1);
  log.completion_wall_ms = header_value(header[2], "completion_wall_ms", 1);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      throw Error("emission log line " + std::to_string(line_no) + ": expected 5 fields, got " +
                  std::to_string(f.size()));
    }
    EmissionEvent e;
    try {
      e.position = std::stoi(f[0]);
      e.token = f[1];
      e.block = std::stoi(f[2]);
      e.source_ms = parse_double(f[3]);
      e.wall_ms = parse_double(f[4]);
    } catch (const std::exception& ex) {
      throw Error("emission log line " + std::to_string(line_no) + ": " + ex.what());
    }
    log.events.push_back(std::move(e));
  }
  log.validate();
  return log;
}

void save_emission_log(const EmissionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write emission log: " + path.string());
  write_emission_log(log, out);
}

EmissionLog load_emission_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open emission log: " + path.string());
  return read_emission_log(in);
}

}  // namespace bst
