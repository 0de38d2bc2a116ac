#pragma once

#include "tvis/core/types.hpp"

#include <map>
#include <string>

namespace tvis::pipeline {

/// Sectioned key=value configuration file ([section] headers, # comments).
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  Real get_real(const std::string& section, const std::string& key, Real fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string serialize() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace tvis::pipeline
