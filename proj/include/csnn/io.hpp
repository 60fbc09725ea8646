#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace csnn {

std::string read_file(const std::string& path);
// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string base64_encode(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian float64 blob <-> doubles.
std::string encode_f64(const double* data, std::size_t n);
std::vector<double> decode_f64(const std::string& b64, const std::string& field);

}  // namespace csnn
