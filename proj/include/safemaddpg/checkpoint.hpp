#pragma once

#include <filesystem>
#include <iosfwd>

#include "safemaddpg/mlp.hpp"

namespace safemaddpg {

// Network checkpoint format, version 1. Plain text:
//
//   mlp-checkpoint v1
//   layers <d0> <d1> ... <dk>
//   hidden <relu|identity|tanh>
//   output <relu|identity|tanh>
//   W<l> <rows> <cols>   followed by rows lines of hexfloat entries
//   b<l> <len>           followed by one line of hexfloat entries
//
// Values are written as C hexadecimal floats, so save -> load -> forward
// reproduces the original network bit for bit.

void save_mlp(const Mlp& mlp, std::ostream& out);
void save_mlp(const Mlp& mlp, const std::filesystem::path& file);

Mlp load_mlp(std::istream& in);
Mlp load_mlp(const std::filesystem::path& file);

}  // namespace safemaddpg
