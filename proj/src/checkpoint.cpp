#include "diflo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace diflo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'D', 'I', 'F', 'L', 'O', '\x01'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpParams& params, std::uint64_t seed,
                     const std::string& config_hash) {
    params.check_consistent();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");

    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_count()));
    std::vector<double> row_major;
    for (int l = 0; l < params.layer_count(); ++l) {
        const Mat& w = params.weights[l];
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(w.rows()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(w.cols()));
        row_major.resize(static_cast<std::size_t>(w.size()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                row_major[static_cast<std::size_t>(r * w.cols() + c)] = w(r, c);
            }
        }
        out.write(reinterpret_cast<const char*>(row_major.data()),
                  static_cast<std::streamsize>(row_major.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(params.biases[l].data()),
                  static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
    }

    nlohmann::json meta;
    meta["widths"] = params.widths;
    meta["seed"] = seed;
    meta["config_hash"] = config_hash;
    const std::string blob = meta.dump();
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }

    CheckpointData data;
    const auto layers = read_pod<std::uint32_t>(in);
    if (layers == 0 || layers > 1024) throw std::runtime_error("checkpoint: corrupt layer count");
    data.params.weights.reserve(layers);
    data.params.biases.reserve(layers);
    std::vector<double> row_major;
    for (std::uint32_t l = 0; l < layers; ++l) {
        const auto rows = read_pod<std::uint32_t>(in);
        const auto cols = read_pod<std::uint32_t>(in);
        if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1u << 28)) {
            throw std::runtime_error("checkpoint: corrupt layer shape");
        }
        row_major.resize(static_cast<std::size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(row_major.data()),
                static_cast<std::streamsize>(row_major.size() * sizeof(double)));
        Mat w(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                w(r, c) = row_major[static_cast<std::size_t>(r) * cols + c];
            }
        }
        Vec b(rows);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated layer data");
        data.params.weights.push_back(std::move(w));
        data.params.biases.push_back(std::move(b));
    }

    const auto meta_len = read_pod<std::uint64_t>(in);
    if (meta_len > (1u << 24)) throw std::runtime_error("checkpoint: corrupt metadata length");
    std::string blob(meta_len, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw std::runtime_error("checkpoint: truncated metadata");

    const auto meta = nlohmann::json::parse(blob);
    data.params.widths = meta.at("widths").get<std::vector<int>>();
    data.seed = meta.at("seed").get<std::uint64_t>();
    data.config_hash = meta.at("config_hash").get<std::string>();
    data.params.check_consistent();
    return data;
}

}  // namespace diflo
