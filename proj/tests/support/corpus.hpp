#pragma once

#include <string>
#include <vector>

#include "sparktrace/harness.hpp"

namespace sparktrace::support {

std::string corpus_dir();

struct LoadedLibrary {
  LibraryManifest manifest;
  AstNode ast;
  Program program;
  std::vector<ExportInfo> exports;  // string-taking only
};

std::vector<LoadedLibrary> load_corpus();
const LoadedLibrary &find_library(const std::vector<LoadedLibrary> &corpus, const std::string &name);
std::string read_file(const std::string &path);

}  // namespace sparktrace::support
