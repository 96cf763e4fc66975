#pragma once

#include "mohone/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mohone {

/// Token-labelled embedding rows in word2vec text layout.
struct LabeledEmbeddings {
  std::vector<std::string> tokens;
  RowMatrix vectors;
};

/// Writes "n d" then "token f1 ... fd" per row, with round-trip exact precision.
void write_word2vec(const std::filesystem::path& path, const std::vector<std::string>& tokens,
                    const RowMatrix& vectors, const std::string& token_prefix = {});

/// Reads a word2vec text file. `token_prefix`, when non-empty, must start every
/// token and is stripped.
LabeledEmbeddings read_word2vec(const std::filesystem::path& path, const std::string& token_prefix = {});

}  // namespace mohone
