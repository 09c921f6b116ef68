// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adlang {

// Interned identifier. Ids are dense and stable within one SymbolTable.
using Sym = int;

class SymbolTable {
 public:
  Sym intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    Sym id = static_cast<Sym>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
  }

  const std::string& name(Sym s) const { return names_.at(static_cast<size_t>(s)); }
  size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Sym> ids_;
};

}  // namespace adlang
