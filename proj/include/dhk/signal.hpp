#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "dhk/hierarchy.hpp"

namespace dhk {

constexpr double kDbFloor = -120.0;
constexpr double kDefaultSampleRate = 8192.0;

struct SignalStream {
    std::vector<double> samples;
    double sample_rate = kDefaultSampleRate;
    NodeId leaf_label = -1;
};

// Windows start at offsets 0, s, 2s, ...; count = floor((M - w) / s) + 1.
// Each window inherits the stream label.
std::vector<SignalStream> sliding_window(const SignalStream& stream, int w, int s);
long long window_count(long long stream_len, long long w, long long s);

enum class WindowFn { Hann, Rect };

struct ComplexMatrix {
    int rows = 0, cols = 0;
    std::vector<std::complex<double>> data;  // row-major
    std::complex<double>& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const std::complex<double>& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct RealMatrix {
    int rows = 0, cols = 0;
    std::vector<double> data;
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const double& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Frame t covers samples [t*hop, t*hop + window_len); each frame is
// multiplied by the window and discrete-Fourier-transformed. One-sided
// output: window_len/2 + 1 bins per frame.
ComplexMatrix stft(const std::vector<double>& signal, int window_len, int hop, WindowFn window);

RealMatrix magnitude(const ComplexMatrix& x);

struct Spectrogram {
    RealMatrix values;  // dB relative to the global maximum: all entries in [kDbFloor, 0]
    int window_len = 0, hop = 0;
    NodeId leaf_label = -1;
};

// 10*log10(|X| / max |X|) elementwise, floored at kDbFloor.
Spectrogram log_spectrogram(const RealMatrix& mag);

// Synthetic hierarchical dataset: each leaf's signal is a sum of sinusoids
// whose coarse band comes from its depth-1 ancestor and whose exact tones
// come from the leaf, plus white Gaussian noise at the requested SNR.
std::vector<SignalStream> synth_dataset(const LabelTree& tree, int per_leaf, int length, double snr_db,
                                        std::uint64_t seed);

// Gives floor(ratio * N) distinct streams a different leaf label, drawn
// uniformly from the labels present in the input; the rest pass through
// unchanged.
std::vector<SignalStream> flip_labels(const std::vector<SignalStream>& streams, double ratio, std::uint64_t seed);

// Dataset file: one `id<TAB>leaf_name<TAB>comma-separated samples` per line.
void write_dataset(const std::string& path, const std::vector<SignalStream>& streams, const LabelTree& tree);
std::vector<SignalStream> read_dataset(const std::string& path, const LabelTree& tree);

// Spectrogram cache: 16-byte header (magic "DHKS", T and F as little-endian
// u32, 4 reserved bytes), then row-major little-endian f32 values.
void write_spectrogram(const std::string& path, const Spectrogram& spect);
Spectrogram read_spectrogram(const std::string& path);

// Mean dB per frequency band over all frames, rescaled into [-1, 1].
// Feature head for the dense trainer.
std::vector<double> band_features(const Spectrogram& spect, int n_bands);

}  // namespace dhk
