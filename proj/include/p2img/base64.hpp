#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace p2img {

std::string base64_encode(const uint8_t* data, size_t len);
std::string base64_encode(const std::vector<uint8_t>& data);
std::vector<uint8_t> base64_decode(const std::string& text); // throws on bad input

} // namespace p2img
