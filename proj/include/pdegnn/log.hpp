#pragma once

#include <string_view>

namespace pdegnn::log {

/// Emit a warning on stderr unless warnings are silenced.
void warn(std::string_view message);

/// Number of warnings raised since process start (silenced ones included).
long warning_count();

/// RAII guard that silences stderr output of warnings in its scope.
class Silence {
 public:
  Silence();
  ~Silence();
  Silence(const Silence&) = delete;
  Silence& operator=(const Silence&) = delete;

 private:
  bool previous_;
};

}  // namespace pdegnn::log
