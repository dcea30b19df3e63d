#pragma once

#include "ssmsec/model.hpp"

#include <iosfwd>
#include <string>

namespace ssmsec {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Binary container: 8-byte magic, u32 version, u64 header length, JSON header
// (shapes, layer kinds, seed, block table), then every parameter block as
// little-endian f64 in block-table order.
void save_model(const StackedModel& model, std::ostream& out);
StackedModel load_model(std::istream& in);
void save_model(const StackedModel& model, const std::string& path);
StackedModel load_model(const std::string& path);

// Human-readable dump with every block as a JSON array.
std::string dump_model_json(const StackedModel& model);

}  // namespace ssmsec
