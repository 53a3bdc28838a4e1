#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svt/attention.hpp"
#include "svt/video.hpp"

namespace svt {

// Square bit matrix over slice positions in raster order; row p is the set of
// positions that influence p.
class Reachability {
 public:
  Reachability() = default;
  explicit Reachability(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_) {}

  std::size_t size() const noexcept { return n_; }
  bool test(std::size_t p, std::size_t q) const { return (bits_[p * words_ + q / 64] >> (q % 64)) & 1u; }
  void set(std::size_t p, std::size_t q) { bits_[p * words_ + q / 64] |= std::uint64_t{1} << (q % 64); }
  std::size_t row_count(std::size_t p) const;
  // row(dst) |= row(src) of `other`.
  void or_row(std::size_t dst, const Reachability& other, std::size_t src);
  void clear_row(std::size_t p);
  void copy_row(std::size_t dst, const Reachability& other, std::size_t src);
  // True when every bit set here is set in `other`.
  bool subset_of(const Reachability& other) const;
  bool operator==(const Reachability&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

struct Position3 {
  int t = 0, h = 0, w = 0;
  auto operator<=>(const Position3&) const = default;
  std::string str() const;
};

struct BlindSpot {
  Position3 p;  // influenced position
  Position3 q;  // earlier position with no path to p
  bool operator==(const BlindSpot&) const = default;
};

struct DependencyReport {
  VideoShape slice;
  LayerSchedule schedule;
  int masked_kernel = 3;
  Reachability reach;  // after the masked convolution and every layer
  std::size_t blind_spot_count = 0;
};

// Influence sets of the masked decoder: the masked convolution's causal
// window followed by each causal block-attention layer in order.
// `layers` (optional) receives the reachability after the convolution and
// after every layer.
Reachability dependency_graph(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel,
                              std::vector<Reachability>* layers = nullptr);

DependencyReport analyze_decoder(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel);

// Pairs (p, q) with q before p in raster order and no influence path, by
// increasing raster distance and then by p; at most `max_report`.
std::vector<BlindSpot> find_blind_spots(const DependencyReport& report, std::size_t max_report);

bool is_blind_spot(const DependencyReport& report, const Position3& p, const Position3& q);

struct EncoderVerdict {
  bool connected = false;
  // Some (p, q) with q not influencing p, when disconnected.
  std::optional<BlindSpot> witness;
};

// Unmasked block attention: every position of a block sees the whole block.
EncoderVerdict verify_encoder_connectivity(const VideoShape& slice, const LayerSchedule& schedule);

// Schedule echo, verdict, blind-spot count and the first pairs.
std::string format_decoder_report(const DependencyReport& report, const std::vector<BlindSpot>& pairs);
std::string format_encoder_report(const VideoShape& slice, const LayerSchedule& schedule, const EncoderVerdict& v);

}  // namespace svt
