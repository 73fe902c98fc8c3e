#include "dhk/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dhk/rng.hpp"

namespace dhk {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -kTau / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void dft_naive(const std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out) {
    const std::size_t n = in.size();
    out.assign(n, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = -kTau * static_cast<double>(k) * static_cast<double>(m) / static_cast<double>(n);
            acc += in[m] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

long long window_count(long long stream_len, long long w, long long s) {
    return (stream_len - w) / s + 1;
}

std::vector<SignalStream> sliding_window(const SignalStream& stream, int w, int s) {
    const auto m = static_cast<long long>(stream.samples.size());
    if (w < 1 || w > m)
        fail(Errc::window_too_large, "window " + std::to_string(w) + " does not fit stream of length " +
                                         std::to_string(m));
    if (s < 1) fail(Errc::non_positive_step, "step must be >= 1, got " + std::to_string(s));
    const long long count = window_count(m, w, s);
    std::vector<SignalStream> out;
    out.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
        SignalStream win;
        win.sample_rate = stream.sample_rate;
        win.leaf_label = stream.leaf_label;
        const auto off = static_cast<std::size_t>(i * s);
        win.samples.assign(stream.samples.begin() + off, stream.samples.begin() + off + w);
        out.push_back(std::move(win));
    }
    return out;
}

ComplexMatrix stft(const std::vector<double>& signal, int window_len, int hop, WindowFn window) {
    if (window_len < 2) fail(Errc::signal_too_short, "window_len must be >= 2");
    if (hop < 1) fail(Errc::non_positive_step, "hop must be >= 1");
    if (static_cast<int>(signal.size()) < window_len)
        fail(Errc::signal_too_short, "signal shorter than one window");

    std::vector<double> win(static_cast<std::size_t>(window_len), 1.0);
    if (window == WindowFn::Hann)
        for (int n = 0; n < window_len; ++n)
            win[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(kTau * n / window_len);

    const int frames = static_cast<int>((signal.size() - static_cast<std::size_t>(window_len)) / hop) + 1;
    const int bins = window_len / 2 + 1;
    ComplexMatrix out;
    out.rows = frames;
    out.cols = bins;
    out.data.resize(static_cast<std::size_t>(frames) * bins);

    std::vector<std::complex<double>> frame(static_cast<std::size_t>(window_len));
    std::vector<std::complex<double>> spectrum;
    for (int t = 0; t < frames; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * hop;
        for (int n = 0; n < window_len; ++n)
            frame[static_cast<std::size_t>(n)] = signal[off + n] * win[static_cast<std::size_t>(n)];
        if (is_pow2(window_len)) {
            spectrum = frame;
            fft_pow2(spectrum);
        } else {
            dft_naive(frame, spectrum);
        }
        for (int k = 0; k < bins; ++k) out.at(t, k) = spectrum[static_cast<std::size_t>(k)];
    }
    return out;
}

RealMatrix magnitude(const ComplexMatrix& x) {
    RealMatrix m;
    m.rows = x.rows;
    m.cols = x.cols;
    m.data.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) m.data[i] = std::abs(x.data[i]);
    return m;
}

Spectrogram log_spectrogram(const RealMatrix& mag) {
    if (mag.data.empty()) fail(Errc::all_zero_spectrum, "empty magnitude matrix");
    const double peak = *std::max_element(mag.data.begin(), mag.data.end());
    if (!(peak > 0.0)) fail(Errc::all_zero_spectrum, "magnitude matrix has no positive entry");
    Spectrogram s;
    s.values.rows = mag.rows;
    s.values.cols = mag.cols;
    s.values.data.resize(mag.data.size());
    for (std::size_t i = 0; i < mag.data.size(); ++i) {
        const double r = mag.data[i] / peak;
        s.values.data[i] = r > 0.0 ? std::max(kDbFloor, 10.0 * std::log10(r)) : kDbFloor;
    }
    return s;
}

std::vector<SignalStream> synth_dataset(const LabelTree& tree, int per_leaf, int length, double snr_db,
                                        std::uint64_t seed) {
    if (tree.leaf_count() < 1) fail(Errc::invalid_tree, "tree has no leaves");
    if (per_leaf < 1) fail(Errc::config_parse, "per_leaf must be >= 1");
    if (length < 256) fail(Errc::config_parse, "stream length must be >= 256");

    const auto& top_groups = tree.children(tree.root());
    const int n_groups = static_cast<int>(top_groups.size());
    constexpr int kTones = 3;
    const double signal_power = kTones / 2.0;
    const double noise_std = std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0));

    std::vector<SignalStream> out;
    out.reserve(static_cast<std::size_t>(tree.leaf_count()) * per_leaf);
    for (NodeId leaf : tree.leaves()) {
        // coarse band from the depth-1 ancestor, exact tones from the leaf
        const NodeId top = tree.ancestors(leaf).front();
        const int g = static_cast<int>(std::find(top_groups.begin(), top_groups.end(), top) - top_groups.begin());
        std::vector<NodeId> group_leaves;
        for (NodeId d : tree.descendants(top))
            if (tree.is_leaf(d)) group_leaves.push_back(d);
        const int r = static_cast<int>(std::find(group_leaves.begin(), group_leaves.end(), leaf) -
                                       group_leaves.begin());
        const int n_in_group = static_cast<int>(group_leaves.size());

        const double band_lo = 0.5 * (g + 0.12) / n_groups;
        const double band_hi = 0.5 * (g + 0.88) / n_groups;
        const double sub_lo = band_lo + (band_hi - band_lo) * r / n_in_group;
        const double sub_hi = band_lo + (band_hi - band_lo) * (r + 1) / n_in_group;
        double tones[kTones];
        for (int j = 0; j < kTones; ++j) tones[j] = sub_lo + (sub_hi - sub_lo) * (j + 1) / (kTones + 1);

        for (int rep = 0; rep < per_leaf; ++rep) {
            std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(leaf) * 1000003ULL +
                                                   static_cast<std::uint64_t>(rep)));
            double phases[kTones];
            for (double& ph : phases) ph = uniform(rng, 0.0, kTau);
            SignalStream s;
            s.sample_rate = kDefaultSampleRate;
            s.leaf_label = leaf;
            s.samples.resize(static_cast<std::size_t>(length));
            for (int n = 0; n < length; ++n) {
                double x = 0.0;
                for (int j = 0; j < kTones; ++j) x += std::sin(kTau * tones[j] * n + phases[j]);
                s.samples[static_cast<std::size_t>(n)] = x + noise_std * normal(rng);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<SignalStream> flip_labels(const std::vector<SignalStream>& streams, double ratio, std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) fail(Errc::config_parse, "flip ratio must lie in [0,1]");
    std::vector<SignalStream> out = streams;
    const auto n = static_cast<std::size_t>(streams.size());
    // tiny nudge so e.g. 0.3 * 10 lands on 3 despite binary rounding
    const auto flips = static_cast<std::size_t>(ratio * static_cast<double>(n) + 1e-9);
    if (flips == 0 || out.empty()) return out;

    // labels present anywhere in the input define the flip alphabet
    std::vector<NodeId> alphabet;
    for (const auto& s : streams)
        if (std::find(alphabet.begin(), alphabet.end(), s.leaf_label) == alphabet.end())
            alphabet.push_back(s.leaf_label);
    std::sort(alphabet.begin(), alphabet.end());
    if (alphabet.size() < 2) return out;

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < flips; ++i)  // partial Fisher-Yates
        std::swap(idx[i], idx[i + bounded(rng, n - i)]);
    for (std::size_t i = 0; i < flips; ++i) {
        auto& s = out[idx[i]];
        const auto orig = static_cast<std::size_t>(
            std::find(alphabet.begin(), alphabet.end(), s.leaf_label) - alphabet.begin());
        auto pick = bounded(rng, alphabet.size() - 1);
        if (pick >= orig) ++pick;  // uniform over the alphabet minus the original label
        s.leaf_label = alphabet[pick];
    }
    return out;
}

void write_dataset(const std::string& path, const std::vector<SignalStream>& streams, const LabelTree& tree) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open for writing: " + path);
    std::string line;
    for (std::size_t i = 0; i < streams.size(); ++i) {
        line.clear();
        line += std::to_string(i);
        line += '\t';
        line += tree.name(streams[i].leaf_label);
        line += '\t';
        for (std::size_t k = 0; k < streams[i].samples.size(); ++k) {
            if (k) line += ',';
            line += format_double(streams[i].samples[k]);
        }
        line += '\n';
        out << line;
    }
    if (!out) fail(Errc::io_error, "write failed: " + path);
}

std::vector<SignalStream> read_dataset(const std::string& path, const LabelTree& tree) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open dataset: " + path);
    std::vector<SignalStream> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
            fail(Errc::config_parse,
                 "dataset line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
        const std::string leaf_name = line.substr(t1 + 1, t2 - t1 - 1);
        if (!tree.has_name(leaf_name))
            fail(Errc::label_not_in_tree,
                 "dataset line " + std::to_string(lineno) + ": unknown leaf '" + leaf_name + "'");
        SignalStream s;
        s.leaf_label = tree.id_of(leaf_name);
        if (!tree.is_leaf(s.leaf_label))
            fail(Errc::label_not_in_tree,
                 "dataset line " + std::to_string(lineno) + ": '" + leaf_name + "' is not a leaf");
        const char* p = line.c_str() + t2 + 1;
        const char* end = line.c_str() + line.size();
        while (p < end) {
            char* next = nullptr;
            const double v = std::strtod(p, &next);
            if (next == p)
                fail(Errc::config_parse, "dataset line " + std::to_string(lineno) + ": bad sample value");
            s.samples.push_back(v);
            p = next;
            if (p < end) {
                if (*p != ',')
                    fail(Errc::config_parse,
                         "dataset line " + std::to_string(lineno) + ": expected ',' between samples");
                ++p;
            }
        }
        if (s.samples.empty())
            fail(Errc::config_parse, "dataset line " + std::to_string(lineno) + ": no samples");
        out.push_back(std::move(s));
    }
    return out;
}

void write_spectrogram(const std::string& path, const Spectrogram& spect) {
    std::string buf;
    buf.reserve(16 + spect.values.data.size() * 4);
    buf += "DHKS";
    put_u32le(buf, static_cast<std::uint32_t>(spect.values.rows));
    put_u32le(buf, static_cast<std::uint32_t>(spect.values.cols));
    put_u32le(buf, 0);  // reserved
    for (double v : spect.values.data) {
        const auto f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32le(buf, bits);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(Errc::io_error, "write failed: " + path);
}

Spectrogram read_spectrogram(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open spectrogram: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || buf.compare(0, 4, "DHKS") != 0)
        fail(Errc::io_error, "bad spectrogram header: " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    Spectrogram s;
    const std::uint32_t rows = get_u32le(p + 4);
    const std::uint32_t cols = get_u32le(p + 8);
    if (rows < 1 || cols < 1 || rows > 1u << 24 || cols > 1u << 24)
        fail(Errc::io_error, "implausible spectrogram shape: " + path);
    s.values.rows = static_cast<int>(rows);
    s.values.cols = static_cast<int>(cols);
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (buf.size() != 16 + count * 4)
        fail(Errc::io_error, "truncated spectrogram: " + path);
    s.values.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32le(p + 16 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        s.values.data[i] = static_cast<double>(f);
    }
    return s;
}

std::vector<double> band_features(const Spectrogram& spect, int n_bands) {
    const int bins = spect.values.cols;
    if (n_bands < 1 || n_bands > bins)
        fail(Errc::config_parse, "band count must lie in [1, " + std::to_string(bins) + "]");
    std::vector<double> feat(static_cast<std::size_t>(n_bands), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(n_bands), 0);
    for (int k = 0; k < bins; ++k) {
        const int band = static_cast<int>(static_cast<long long>(k) * n_bands / bins);
        double col_sum = 0.0;
        for (int t = 0; t < spect.values.rows; ++t) col_sum += spect.values.at(t, k);
        feat[static_cast<std::size_t>(band)] += col_sum;
        counts[static_cast<std::size_t>(band)] += spect.values.rows;
    }
    for (int b = 0; b < n_bands; ++b) {
        const double mean_db = feat[static_cast<std::size_t>(b)] / counts[static_cast<std::size_t>(b)];
        feat[static_cast<std::size_t>(b)] = mean_db / 60.0 + 1.0;  // [-120, 0] dB -> [-1, 1]
    }
    return feat;
}

}  // namespace dhk
