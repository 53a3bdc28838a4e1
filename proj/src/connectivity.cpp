#include "svt/connectivity.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace svt {

namespace {

Position3 position_of(const VideoShape& s, std::size_t p) {
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  return {static_cast<int>(p / hw), static_cast<int>((p % hw) / s.w), static_cast<int>(p % s.w)};
}

std::size_t raster(const VideoShape& s, const Position3& q) {
  return (static_cast<std::size_t>(q.t) * s.h + q.h) * s.w + q.w;
}

void check_in_slice(const VideoShape& s, const Position3& q) {
  if (q.t < 0 || q.t >= s.t || q.h < 0 || q.h >= s.h || q.w < 0 || q.w >= s.w) {
    throw ConfigError("position " + q.str() + " lies outside the slice");
  }
}

std::string schedule_echo(const LayerSchedule& schedule) {
  std::ostringstream out;
  for (std::size_t l = 0; l < schedule.size(); ++l) {
    out << "  layer " << l << ": block " << schedule[l].block.str() << ", " << schedule[l].heads << " heads\n";
  }
  return out.str();
}

}  // namespace

std::size_t Reachability::row_count(std::size_t p) const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < words_; ++k) n += static_cast<std::size_t>(std::popcount(bits_[p * words_ + k]));
  return n;
}

void Reachability::or_row(std::size_t dst, const Reachability& other, std::size_t src) {
  for (std::size_t k = 0; k < words_; ++k) bits_[dst * words_ + k] |= other.bits_[src * words_ + k];
}

void Reachability::clear_row(std::size_t p) {
  std::fill_n(bits_.begin() + static_cast<std::ptrdiff_t>(p * words_), words_, std::uint64_t{0});
}

void Reachability::copy_row(std::size_t dst, const Reachability& other, std::size_t src) {
  for (std::size_t k = 0; k < words_; ++k) bits_[dst * words_ + k] = other.bits_[src * words_ + k];
}

bool Reachability::subset_of(const Reachability& other) const {
  if (n_ != other.n_) return false;
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (bits_[k] & ~other.bits_[k]) return false;
  }
  return true;
}

std::string Position3::str() const {
  return "(" + std::to_string(t) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

Reachability dependency_graph(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel,
                              std::vector<Reachability>* layers) {
  check_schedule(slice, schedule);
  if (masked_kernel < 1 || masked_kernel % 2 == 0) {
    throw ConfigError("masked convolution kernel must be odd, got " + std::to_string(masked_kernel));
  }
  const std::size_t n = static_cast<std::size_t>(slice.positions());
  const int r = masked_kernel / 2;
  Reachability reach(n);
  for (std::size_t p = 0; p < n; ++p) {
    const Position3 c = position_of(slice, p);
    for (int dt = -r; dt <= r; ++dt) {
      for (int dh = -r; dh <= r; ++dh) {
        for (int dw = -r; dw <= r; ++dw) {
          if (Position3{dt, dh, dw} >= Position3{0, 0, 0}) continue;
          const Position3 q{c.t + dt, c.h + dh, c.w + dw};
          if (q.t < 0 || q.t >= slice.t || q.h < 0 || q.h >= slice.h || q.w < 0 || q.w >= slice.w) continue;
          reach.set(p, raster(slice, q));
        }
      }
    }
  }
  if (layers) layers->assign(1, reach);

  for (const auto& layer : schedule) {
    const BlockPartition part = block_partition(slice, layer.block);
    Reachability next(n);
    Reachability running(n);
    for (std::size_t b = 0; b < part.num_blocks; ++b) {
      running.clear_row(0);
      for (std::size_t i = 0; i < part.block_positions; ++i) {
        const std::size_t j = part.order[b * part.block_positions + i];
        running.or_row(0, reach, j);
        next.copy_row(j, running, 0);
      }
    }
    reach = std::move(next);
    if (layers) layers->push_back(reach);
  }
  return reach;
}

DependencyReport analyze_decoder(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel) {
  DependencyReport r;
  r.slice = slice;
  r.schedule = schedule;
  r.masked_kernel = masked_kernel;
  r.reach = dependency_graph(slice, schedule, masked_kernel);
  for (std::size_t p = 0; p < r.reach.size(); ++p) r.blind_spot_count += p - r.reach.row_count(p);
  return r;
}

std::vector<BlindSpot> find_blind_spots(const DependencyReport& report, std::size_t max_report) {
  std::vector<BlindSpot> out;
  const std::size_t n = report.reach.size();
  for (std::size_t dist = 1; dist < n && out.size() < max_report; ++dist) {
    for (std::size_t p = dist; p < n && out.size() < max_report; ++p) {
      const std::size_t q = p - dist;
      if (!report.reach.test(p, q)) out.push_back({position_of(report.slice, p), position_of(report.slice, q)});
    }
  }
  return out;
}

bool is_blind_spot(const DependencyReport& report, const Position3& p, const Position3& q) {
  check_in_slice(report.slice, p);
  check_in_slice(report.slice, q);
  const std::size_t pi = raster(report.slice, p);
  const std::size_t qi = raster(report.slice, q);
  return qi < pi && !report.reach.test(pi, qi);
}

EncoderVerdict verify_encoder_connectivity(const VideoShape& slice, const LayerSchedule& schedule) {
  check_schedule(slice, schedule);
  const std::size_t n = static_cast<std::size_t>(slice.positions());
  Reachability reach(n);
  for (std::size_t p = 0; p < n; ++p) reach.set(p, p);
  for (const auto& layer : schedule) {
    const BlockPartition part = block_partition(slice, layer.block);
    Reachability next(n);
    Reachability block_union(n);
    for (std::size_t b = 0; b < part.num_blocks; ++b) {
      block_union.clear_row(0);
      for (std::size_t i = 0; i < part.block_positions; ++i) {
        block_union.or_row(0, reach, part.order[b * part.block_positions + i]);
      }
      for (std::size_t i = 0; i < part.block_positions; ++i) {
        next.copy_row(part.order[b * part.block_positions + i], block_union, 0);
      }
    }
    reach = std::move(next);
  }
  EncoderVerdict v;
  for (std::size_t p = 0; p < n; ++p) {
    if (reach.row_count(p) == n) continue;
    for (std::size_t q = 0; q < n; ++q) {
      if (!reach.test(p, q)) {
        v.witness = BlindSpot{position_of(slice, p), position_of(slice, q)};
        return v;
      }
    }
  }
  v.connected = true;
  return v;
}

std::string format_decoder_report(const DependencyReport& report, const std::vector<BlindSpot>& pairs) {
  std::ostringstream out;
  out << "decoder slice " << report.slice.t << "x" << report.slice.h << "x" << report.slice.w << ", masked kernel "
      << report.masked_kernel << "\n"
      << schedule_echo(report.schedule) << "blind spots: " << report.blind_spot_count << "\n";
  for (const auto& b : pairs) out << "  p=" << b.p.str() << " q=" << b.q.str() << "\n";
  return out.str();
}

std::string format_encoder_report(const VideoShape& slice, const LayerSchedule& schedule, const EncoderVerdict& v) {
  std::ostringstream out;
  out << "encoder slice " << slice.t << "x" << slice.h << "x" << slice.w << "\n" << schedule_echo(schedule);
  out << "encoder: " << (v.connected ? "connected" : "disconnected") << "\n";
  if (v.witness) out << "  witness p=" << v.witness->p.str() << " q=" << v.witness->q.str() << "\n";
  return out.str();
}

}  // namespace svt
