#include "l2c/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace l2c {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t get_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > 4)
        throw input_error("write_tensor: ndim must be in [1, 4]");
    if (tensor.size() == 0 || tensor.size() != tensor.data.size())
        throw input_error("write_tensor: dims do not match payload size");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw input_error("write_tensor: cannot open " + path);

    os.write(kTensorMagic.data(), kTensorMagic.size());
    char dt = static_cast<char>(tensor.dtype);
    os.write(&dt, 1);
    put_u32(os, static_cast<uint32_t>(tensor.dims.size()));
    for (uint64_t d : tensor.dims) put_u64(os, d);

    if (tensor.dtype == Dtype::f32) {
        std::vector<float> buf(tensor.data.begin(), tensor.data.end());
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
        os.write(reinterpret_cast<const char*>(tensor.data.data()),
                 static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write_tensor: write failed for " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw input_error("read_tensor: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());

    size_t off = 0;
    auto need = [&](size_t n, const char* what) {
        if (bytes.size() - off < n)
            throw input_error(std::string("read_tensor: truncated ") + what + " in " + path);
    };

    need(8, "magic");
    if (std::memcmp(bytes.data(), kTensorMagic.data(), 8) != 0)
        throw input_error("read_tensor: bad magic in " + path);
    off += 8;

    need(1, "dtype");
    uint8_t dt = bytes[off++];
    if (dt > 1) throw input_error("read_tensor: unknown dtype in " + path);

    need(4, "header");
    uint32_t ndim = get_u32(bytes.data() + off);
    off += 4;
    if (ndim < 1 || ndim > 4) throw input_error("read_tensor: ndim out of range in " + path);

    Tensor t;
    t.dtype = static_cast<Dtype>(dt);
    t.dims.resize(ndim);
    need(8 * static_cast<size_t>(ndim), "dims");
    for (uint32_t i = 0; i < ndim; ++i) {
        t.dims[i] = get_u64(bytes.data() + off);
        off += 8;
        if (t.dims[i] == 0) throw input_error("read_tensor: zero dimension in " + path);
    }

    size_t count = t.size();
    size_t elem = t.dtype == Dtype::f32 ? 4 : 8;
    if (bytes.size() - off < count * elem)
        throw input_error("read_tensor: truncated payload in " + path);
    if (bytes.size() - off > count * elem)
        throw input_error("read_tensor: trailing bytes in " + path);

    t.data.resize(count);
    if (t.dtype == Dtype::f32) {
        for (size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, bytes.data() + off + i * 4, 4);
            t.data[i] = static_cast<double>(f);
        }
    } else {
        std::memcpy(t.data.data(), bytes.data() + off, count * 8);
    }
    return t;
}

namespace {

void read_range(const nlohmann::json& j, const char* key, double out[2]) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
        throw input_error(std::string("stats config: ") + key + " must be [lo, hi]");
    out[0] = v[0].get<double>();
    out[1] = v[1].get<double>();
    if (out[0] > out[1]) throw input_error(std::string("stats config: inverted ") + key);
}

}  // namespace

StatsConfig parse_stats_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("stats config: parse error: ") + e.what());
    }
    if (!j.is_object()) throw input_error("stats config: document must be an object");

    StatsConfig cfg;
    if (j.contains("target_stats")) {
        const auto& ts = j.at("target_stats");
        cfg.target_stats.mean_entropy = ts.value("mean_entropy", 0.0);
        cfg.target_stats.mean_conf = ts.value("mean_conf", 0.0);
        cfg.target_stats.p95_conf = ts.value("p95_conf", 0.0);
        cfg.target_stats.p95_entropy = ts.value("p95_entropy", 0.0);
    }
    if (j.contains("objective_weights")) {
        const auto& w = j.at("objective_weights");
        if (!w.is_array() || w.size() != 4)
            throw input_error("stats config: objective_weights must have 4 entries");
        for (int i = 0; i < 4; ++i) {
            cfg.weights[i] = w[i].get<double>();
            if (cfg.weights[i] < 0) throw input_error("stats config: negative weight");
        }
    }
    read_range(j, "a_range", cfg.a_range);
    read_range(j, "alpha_range", cfg.alpha_range);
    read_range(j, "eps_range", cfg.eps_range);
    read_range(j, "b_range", cfg.b_range);
    if (j.contains("entropy_tolerance")) {
        cfg.entropy_tolerance = j.at("entropy_tolerance").get<double>();
        if (cfg.entropy_tolerance <= 0)
            throw input_error("stats config: entropy_tolerance must be > 0");
    }
    if (j.contains("alpha_points")) cfg.alpha_points = j.at("alpha_points").get<int>();
    if (j.contains("eps_points")) cfg.eps_points = j.at("eps_points").get<int>();
    if (j.contains("b_points")) cfg.b_points = j.at("b_points").get<int>();
    if (cfg.alpha_points < 1 || cfg.eps_points < 1 || cfg.b_points < 1)
        throw input_error("stats config: sweep point counts must be >= 1");
    return cfg;
}

StatsConfig read_stats_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw input_error("stats config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_stats_config(text);
}

}  // namespace l2c
