#include "octseg/dataio/npy.hpp"

#include <cstring>
#include <fstream>

#include "octseg/common.hpp"

namespace octseg::dataio {

namespace {

constexpr char kMagic[] = "\x93NUMPY";

// The header is a python dict literal; the three keys are always written in
// the same order by numpy, but parse them individually to be safe.
std::string dict_value(const std::string& header, const std::string& key) {
    const size_t kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos) throw IoError("npy header missing key '" + key + "'");
    size_t pos = header.find(':', kpos);
    if (pos == std::string::npos) throw IoError("malformed npy header");
    ++pos;
    while (pos < header.size() && header[pos] == ' ') ++pos;
    size_t end;
    if (header[pos] == '(') {
        end = header.find(')', pos);
        if (end == std::string::npos) throw IoError("malformed npy shape");
        ++end;
    } else if (header[pos] == '\'') {
        end = header.find('\'', pos + 1);
        if (end == std::string::npos) throw IoError("malformed npy descr");
        ++end;
    } else {
        end = header.find_first_of(",}", pos);
        if (end == std::string::npos) throw IoError("malformed npy header");
    }
    return header.substr(pos, end - pos);
}

std::vector<int> parse_shape(const std::string& tuple) {
    std::vector<int> shape;
    std::string digits;
    for (char ch : tuple) {
        if (ch >= '0' && ch <= '9') {
            digits += ch;
        } else if (!digits.empty()) {
            shape.push_back(std::stoi(digits));
            digits.clear();
        }
    }
    if (shape.empty()) throw IoError("npy scalar arrays are not supported");
    return shape;
}

template <typename T>
void widen(const std::vector<char>& raw, std::vector<double>& out) {
    const size_t n = raw.size() / sizeof(T);
    out.resize(n);
    const T* src = reinterpret_cast<const T*>(raw.data());
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<double>(src[i]);
}

std::string header_for(const std::string& descr, const std::vector<int>& shape) {
    std::string shp = "(";
    for (size_t i = 0; i < shape.size(); ++i) shp += std::to_string(shape[i]) + ", ";
    if (shape.size() > 1) shp.resize(shp.size() - 2);
    else shp.resize(shp.size() - 1);
    shp += ")";
    std::string dict =
        "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shp + ", }";
    // total header (magic 6 + version 2 + len 2 + dict) padded to 64 bytes
    const size_t unpadded = 10 + dict.size() + 1;
    const size_t padded = (unpadded + 63) / 64 * 64;
    dict.append(padded - unpadded, ' ');
    dict += '\n';
    return dict;
}

void write_raw(const std::filesystem::path& path, const std::string& descr,
               const std::vector<int>& shape, const void* data, size_t elem_size) {
    for (int d : shape)
        if (d <= 0) throw ArgumentError("npy shape dims must be positive");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const std::string dict = header_for(descr, shape);
    out.write(kMagic, 6);
    out.put(1).put(0);
    const auto hlen = static_cast<uint16_t>(dict.size());
    out.write(reinterpret_cast<const char*>(&hlen), 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    int64_t n = 1;
    for (int d : shape) n *= d;
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(elem_size * n));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

NpyArray read_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0)
        throw IoError("not an npy file: " + path.string());
    char version[2];
    in.read(version, 2);
    uint32_t hlen = 0;
    if (version[0] == 1) {
        uint16_t h16 = 0;
        in.read(reinterpret_cast<char*>(&h16), 2);
        hlen = h16;
    } else if (version[0] == 2 || version[0] == 3) {
        in.read(reinterpret_cast<char*>(&hlen), 4);
    } else {
        throw IoError("unsupported npy version in " + path.string());
    }
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    if (!in) throw IoError("truncated npy header: " + path.string());

    NpyArray arr;
    std::string descr = dict_value(header, "descr");
    if (descr.size() >= 2 && descr.front() == '\'') descr = descr.substr(1, descr.size() - 2);
    arr.dtype = descr;
    const std::string order = dict_value(header, "fortran_order");
    if (order.find("True") != std::string::npos)
        throw IoError("fortran-order npy not supported: " + path.string());
    arr.shape = parse_shape(dict_value(header, "shape"));

    size_t elem = 0;
    if (descr == "<f4" || descr == "=f4") elem = 4;
    else if (descr == "<f8" || descr == "=f8") elem = 8;
    else if (descr == "|u1" || descr == "<u1" || descr == "u1") elem = 1;
    else if (descr == "|i1" || descr == "<i1") elem = 1;
    else if (descr == "<u2") elem = 2;
    else if (descr == "<i2") elem = 2;
    else if (descr == "<i4") elem = 4;
    else if (descr == "<i8") elem = 8;
    else throw IoError("unsupported npy dtype " + descr + " in " + path.string());

    std::vector<char> raw(static_cast<size_t>(arr.size()) * elem);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("truncated npy payload: " + path.string());

    if (descr == "<f4" || descr == "=f4") widen<float>(raw, arr.data);
    else if (descr == "<f8" || descr == "=f8") widen<double>(raw, arr.data);
    else if (descr == "|i1" || descr == "<i1") widen<int8_t>(raw, arr.data);
    else if (descr == "<u2") widen<uint16_t>(raw, arr.data);
    else if (descr == "<i2") widen<int16_t>(raw, arr.data);
    else if (descr == "<i4") widen<int32_t>(raw, arr.data);
    else if (descr == "<i8") widen<int64_t>(raw, arr.data);
    else widen<uint8_t>(raw, arr.data);
    return arr;
}

void write_npy_f4(const std::filesystem::path& path, const std::vector<int>& shape,
                  const float* data) {
    write_raw(path, "<f4", shape, data, 4);
}

void write_npy_f8(const std::filesystem::path& path, const std::vector<int>& shape,
                  const double* data) {
    write_raw(path, "<f8", shape, data, 8);
}

void write_npy_u1(const std::filesystem::path& path, const std::vector<int>& shape,
                  const uint8_t* data) {
    write_raw(path, "|u1", shape, data, 1);
}

}  // namespace octseg::dataio
