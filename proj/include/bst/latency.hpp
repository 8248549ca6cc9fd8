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

#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bst/vocabulary.hpp"

namespace bst {

// Time source for wall-clock latency. The decoder reports work through
// on_decoder_step(); the harness announces source arrival times through
// wait_until().
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() = 0;
  virtual void wait_until(double /*ms*/) {}
  virtual void on_decoder_step() {}
};

// Monotonic wall clock, zero at construction. Does not sleep.
class SteadyClock : public Clock {
 public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}
  double now_ms() override;

 private:
  std::chrono::steady_clock::time_point start_;
};

// Deterministic clock: time only moves when the source says a chunk arrived
// (wait_until) or the decoder does work (step_ms per decoder position).
class SimulatedClock : public Clock {
 public:
  explicit SimulatedClock(double step_ms = 1.0) : step_ms_(step_ms) {}
  double now_ms() override { return now_; }
  void wait_until(double ms) override {
    if (ms > now_) now_ = ms;
  }
  void on_decoder_step() override { now_ += step_ms_; }

 private:
  double step_ms_;
  double now_ = 0.0;
};

struct EmissionEvent {
  int position = 0;     // 1-based output position
  std::string token;    // token text
  int block = 0;        // 0-based index of the block whose round committed it
  double source_ms = 0.0;  // source audio consumed at commit
  double wall_ms = 0.0;    // clock reading at commit
};

struct EmissionLog {
  std::vector<EmissionEvent> events;
  double source_total_ms = 0.0;
  double source_end_wall_ms = 0.0;  // clock reading when the last chunk arrived
  double completion_wall_ms = 0.0;  // clock reading when decoding finished

  // Throws bst::Error if positions are not 1..n, source_ms decreases, or
  // exceeds source_total_ms.
  void validate() const;
};

// AL = (1/tau) * sum_{i=1..tau} (d_i - (i-1) * |X| / |Y|), with d_i the
// source consumed at commit of output i, |X| the source duration, |Y| the
// output length and tau the first i with d_i >= |X| (|Y| if none).
double average_lagging(const EmissionLog& log);

struct EndpointLatency {
  double ms = 0.0;
  bool clamped = false;  // completion preceded the end of the source
};

// completion_wall_ms - source_end_wall_ms, clamped at 0.
EndpointLatency endpoint_latency(const EmissionLog& log);

struct LatencyReport {
  double average_lagging_ms = 0.0;
  double endpoint_ms = 0.0;
  bool endpoint_clamped = false;
  int wait_events = 0;
  int tokens_before_source_end = 0;
  int tokens = 0;
};

LatencyReport make_latency_report(const EmissionLog& log, int wait_events);

// TSV with one header line:
//   #source_total_ms=<v>\tsource_end_wall_ms=<v>\tcompletion_wall_ms=<v>
// followed by one line per event:
//   position\ttoken\tblock\tsource_ms\twall_ms
// Numbers are written in shortest round-trip form.
void write_emission_log(const EmissionLog& log, std::ostream& out);
EmissionLog read_emission_log(std::istream& in);
void save_emission_log(const EmissionLog& log, const std::filesystem::path& path);
EmissionLog load_emission_log(const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace bst
