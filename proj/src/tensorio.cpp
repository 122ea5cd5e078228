#include "q2n/tensorio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace q2n {

namespace {

void put_u32_le(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u64_le(std::vector<unsigned char>& out, uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t get_u64_le(const unsigned char* p) {
    uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
    return v;
}

} // namespace

void save_tensor(const Tensor& t, const std::string& path) {
    if (t.rows < 1 || t.cols < 1 || t.data.size() != static_cast<std::size_t>(t.rows) * t.cols) {
        throw argument_error("refusing to save malformed tensor (" + std::to_string(t.rows) + "x" +
                             std::to_string(t.cols) + ", " + std::to_string(t.data.size()) +
                             " elements)");
    }

    std::string header = std::string("{\"dtype\":\"") + dtype_name(t.dtype) +
                         "\",\"rows\":" + std::to_string(t.rows) +
                         ",\"cols\":" + std::to_string(t.cols) + "}\n";

    std::vector<unsigned char> payload;
    payload.reserve(t.data.size() * dtype_size(t.dtype));
    if (t.dtype == DType::f32) {
        for (double v : t.data) put_u32_le(payload, std::bit_cast<uint32_t>(static_cast<float>(v)));
    } else {
        for (double v : t.data) put_u64_le(payload, std::bit_cast<uint64_t>(v));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open \"" + path + "\" for writing");
    out.write(kTensorMagic, sizeof(kTensorMagic));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) throw io_error("write to \"" + path + "\" failed");
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open \"" + path + "\" for reading");

    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
        throw format_error("\"" + path + "\" is not a tensor file (bad magic)");
    }

    std::string header;
    if (!std::getline(in, header)) {
        throw format_error("\"" + path + "\": missing header line");
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw format_error("\"" + path + "\": malformed header: " + e.what());
    }
    if (!j.contains("dtype") || !j.contains("rows") || !j.contains("cols")) {
        throw format_error("\"" + path + "\": header must carry dtype, rows, cols");
    }

    DType dtype = dtype_from_name(j["dtype"].get<std::string>());
    int64_t rows = j["rows"].get<int64_t>();
    int64_t cols = j["cols"].get<int64_t>();
    if (rows < 1 || cols < 1) {
        throw format_error("\"" + path + "\": invalid shape " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }

    std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    std::size_t nbytes = count * dtype_size(dtype);
    std::vector<unsigned char> payload(nbytes);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(nbytes));
    if (static_cast<std::size_t>(in.gcount()) != nbytes) {
        throw truncation_error("\"" + path + "\": payload truncated, expected " +
                               std::to_string(nbytes) + " bytes, got " + std::to_string(in.gcount()));
    }

    Tensor t(rows, cols, dtype);
    if (dtype == DType::f32) {
        for (std::size_t i = 0; i < count; ++i) {
            t.data[i] = static_cast<double>(std::bit_cast<float>(get_u32_le(&payload[i * 4])));
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            t.data[i] = std::bit_cast<double>(get_u64_le(&payload[i * 8]));
        }
    }

    int64_t bad = first_non_finite(t);
    if (bad >= 0) {
        throw data_error("\"" + path + "\": non-finite element at row-major index " +
                         std::to_string(bad));
    }
    return t;
}

LayerBundle load_layer_bundle(const std::string& dir, const std::string& name) {
    LayerBundle b;
    b.name = name;
    b.weight = load_tensor(dir + "/" + name + ".weight" + kTensorExtension);
    b.activations = load_tensor(dir + "/" + name + ".acts" + kTensorExtension);
    validate_bundle(b);
    return b;
}

} // namespace q2n
