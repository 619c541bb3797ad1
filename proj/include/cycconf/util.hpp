#ifndef CYCCONF_UTIL_HPP_
#define CYCCONF_UTIL_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cycconf {

// Shape/precondition violations (bad dimensions, out-of-range labels).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Filesystem and serialization failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent dataset content.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/inf encountered where the math contract requires finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

std::string read_file(const std::string& path);
// Writes to a sibling temp file, then renames into place.
void atomic_write_file(const std::string& path, const std::string& content);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace cycconf

#endif  // CYCCONF_UTIL_HPP_
