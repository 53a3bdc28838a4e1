#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "svt/connectivity.hpp"
#include "svt/grad_check.hpp"
#include "svt/model.hpp"

namespace svt::test {

NdArray<double> random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

// Uniform magnitudes in [lo, hi] with random sign; keeps ReLU inputs away
// from the kink.
NdArray<double> signed_array(Shape shape, std::mt19937_64& rng, double lo, double hi);

// Direct nested-loop convolution: out[o, co] = bias[co] + sum over taps and
// input channels of in[o*stride - pad + tap, ci] * kernel[tap, ci, co].
NdArray<double> reference_conv3d(const NdArray<double>& input, const NdArray<double>& kernel,
                                 const NdArray<double>* bias, const Int3& stride, const Int3& pad,
                                 const Int3& out_shape);

// Random video of split channel values in [0, 15].
Video random_split_video(const VideoShape& shape, int channels, std::mt19937_64& rng);

// Parameters with O(1) activations everywhere: non-zero output head and
// random relative-bias tables.
ParamStore<double> random_params(const Model& model, std::uint64_t seed, double stddev = 0.3);

// Video 4x8x8, s = (2,2,2), two encoder and two decoder layers, width 16.
ModelConfig causality_config(HeadKind head = HeadKind::kCategorical, bool first_slice_decoder = false);

struct CausalityReport {
  std::size_t logits = 0;
  std::size_t forbidden = 0;   // (logit, input position, input channel) triples
  std::size_t violations = 0;  // forbidden triples with a non-zero gradient
  std::size_t allowed = 0;
  std::size_t allowed_nonzero = 0;
  std::string first_violation;
};

// Gradient of every logit of slice idx with respect to a one-hot leaf of
// the whole split video, routed through the encoder mask and the slice
// gather exactly as in the model. A triple is forbidden when the input
// pixel-channel does not precede the logit's pixel-channel in generation
// order.
CausalityReport check_slice_causality(const Model& model, const ParamStore<double>& params, const Video& split,
                                      const SliceIndex& idx, std::uint64_t seed);

// Decoder-only model over `slice` whose reachability row p holds every q
// with a non-zero gradient of y^L(p) with respect to the input row q.
Reachability decoder_sensitivity(const VideoShape& slice, const LayerSchedule& schedule, int masked_kernel,
                                 std::uint64_t seed);

struct ScheduleCase {
  std::string name;
  VideoShape slice;
  LayerSchedule schedule;
  int masked_kernel = 3;
};

// Fixed catalog of decoder schedules over slices of at most 4x4x4 positions.
std::vector<ScheduleCase> analyzer_catalog();

LayerSchedule blocks(std::initializer_list<BlockShape> shapes, int heads = 2, int head_dim = 4, int ffn = 8);

struct GradCase {
  std::string name;
  GraphFn graph;
  std::vector<NdArray<double>> inputs;
  GradCheckOptions options;
};

// Every differentiable op plus full encoder/decoder composites.
std::vector<GradCase> grad_cases();

}  // namespace svt::test
