//
// Copyright 2026 The sqlharness Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Shared test helpers: scratch directories and small fixture databases.

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sqlharness/policy.hpp"
#include "sqlharness/sqlenv.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("sqlharness-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline constexpr const char* kProductsScript =
    "CREATE TABLE products (id INTEGER PRIMARY KEY, name TEXT, price REAL);"
    "INSERT INTO products VALUES (1, 'pen', 10.5), (2, 'mug', 20.0), (3, 'lamp', 43.75);"
    "CREATE TABLE customers (id INTEGER PRIMARY KEY, name TEXT);"
    "INSERT INTO customers VALUES (1, 'ann'), (2, 'bo');";

// Table big(n) holding 1..rows.
inline std::string numbers_script(int rows) {
  std::ostringstream s;
  s << "CREATE TABLE big (n INTEGER);";
  s << "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < " << rows
    << ") INSERT INTO big SELECT x FROM c;";
  return s.str();
}

inline fs::path make_db(const fs::path& path, const std::string& script) {
  sqlharness::Database::create_from_script(path, script);
  return path;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t file_hash(const fs::path& p) { return sqlharness::fnv1a(slurp(p)); }

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string fixture(const std::string& name) { return std::string(SQLHARNESS_FIXTURE_DIR) + "/" + name; }

}  // namespace testsupport
