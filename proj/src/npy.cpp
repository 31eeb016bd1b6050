#include "p2img/npy.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace p2img {

namespace {
constexpr char kMagic[] = "\x93NUMPY";

std::string shape_str(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << shape[i] << ", ";
    if (shape.size() > 1) {
        std::string s = os.str();
        s.resize(s.size() - 2); // drop trailing ", " for multi-dim tuples
        return s + ")";
    }
    return os.str() + ")";
}
} // namespace

void write_npy(const std::string& path, const std::vector<double>& data,
               const std::vector<size_t>& shape) {
    size_t count = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
    if (count != data.size()) throw std::invalid_argument("npy: shape does not match data size");

    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape_str(shape) + ", }";
    size_t unpadded = 6 + 2 + 2 + header.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    header.append(pad, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("npy: cannot open " + path);
    out.write(kMagic, 6);
    out.put(1).put(0);
    uint16_t hlen = static_cast<uint16_t>(header.size());
    out.put(static_cast<char>(hlen & 0xff)).put(static_cast<char>(hlen >> 8));
    out.write(header.data(), static_cast<long>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<long>(data.size() * sizeof(double)));
}

NpyArray read_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("npy: cannot open " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0) throw std::runtime_error("npy: bad magic");
    char ver[2];
    in.read(ver, 2);
    char lenb[2];
    in.read(lenb, 2);
    uint16_t hlen = static_cast<uint8_t>(lenb[0]) | (static_cast<uint16_t>(static_cast<uint8_t>(lenb[1])) << 8);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);

    auto spos = header.find("'shape':");
    auto open = header.find('(', spos);
    auto close = header.find(')', open);
    if (spos == std::string::npos || open == std::string::npos || close == std::string::npos)
        throw std::runtime_error("npy: malformed header");
    if (header.find("'<f8'") == std::string::npos)
        throw std::runtime_error("npy: only little-endian float64 supported");

    NpyArray arr;
    std::string dims = header.substr(open + 1, close - open - 1);
    std::istringstream ds(dims);
    std::string tok;
    while (std::getline(ds, tok, ',')) {
        std::string trimmed;
        for (char c : tok)
            if (!isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
        if (!trimmed.empty()) arr.shape.push_back(std::stoul(trimmed));
    }
    size_t count = std::accumulate(arr.shape.begin(), arr.shape.end(), size_t{1}, std::multiplies<>());
    arr.data.resize(count);
    in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<long>(count * sizeof(double)));
    if (!in) throw std::runtime_error("npy: truncated data");
    return arr;
}

} // namespace p2img
