#pragma once

#include <iosfwd>
#include <string>

#include "cscale/network.hpp"

namespace cscale {

// Model container format "CSSM": 4-byte magic, u16 format version, a
// structured-text header describing layer kinds/shapes/flags/metadata,
// then one CRC32-guarded little-endian f32 payload per tensor in
// declaration order. Loading a saved model restores every shape, flag,
// metadata field and tensor byte; saving a double-precision model narrows
// its tensors to single precision first.
inline constexpr uint16_t kModelFormatVersion = 1;

template <typename T>
void save_model(const NetworkModel<T>& model, const std::string& path);

NetworkModel<float> load_model(const std::string& path);

template <typename T>
void save_model_stream(const NetworkModel<T>& model, std::ostream& os);

NetworkModel<float> load_model_stream(std::istream& is);

}  // namespace cscale
