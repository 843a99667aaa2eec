#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "price/catalog.hpp"

namespace price::testing {

enum class FixtureShape { chain3, star4, cyclic3 };

/// Small random databases with duplicate and null join keys, categorical
/// join keys and an FK-FK edge, sized for the nested-loop oracle.
Catalog make_fixture(FixtureShape shape, std::size_t rows, std::uint64_t seed);

std::string fixture_name(FixtureShape shape);

/// Two tables t(a, b) and s(a, c) joined on a, with hand-chosen rows.
Catalog make_pair_fixture();

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace price::testing
