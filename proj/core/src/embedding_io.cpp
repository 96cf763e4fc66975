#include "mohone/embedding_io.hpp"

#include "mohone/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace mohone {

void write_word2vec(const std::filesystem::path& path, const std::vector<std::string>& tokens,
                    const RowMatrix& vectors, const std::string& token_prefix) {
  if (tokens.size() != static_cast<std::size_t>(vectors.rows())) {
    throw DataError("token count does not match embedding rows for " + path.string());
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << vectors.rows() << ' ' << vectors.cols() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    const auto& tok = tokens[static_cast<std::size_t>(i)];
    if (tok.find_first_of(" \t\n\r") != std::string::npos) {
      throw DataError("token '" + tok + "' contains whitespace");
    }
    out << token_prefix << tok;
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
      // Shortest representation that parses back to the same double.
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, vectors(i, j));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

LabeledEmbeddings read_word2vec(const std::filesystem::path& path, const std::string& token_prefix) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header");
  std::istringstream header(line);
  long long n = -1, d = -1;
  if (!(header >> n >> d) || n < 0 || d < 1) throw ParseError(path.string(), 1, "expected header 'n d'");

  LabeledEmbeddings out;
  out.tokens.reserve(static_cast<std::size_t>(n));
  out.vectors.resize(n, d);
  for (long long i = 0; i < n; ++i) {
    const std::size_t lineno = static_cast<std::size_t>(i) + 2;
    if (!std::getline(in, line)) throw ParseError(path.string(), lineno, "missing embedding row");
    const char* p = line.data();
    const char* end = p + line.size();
    const char* tok_end = p;
    while (tok_end < end && *tok_end != ' ') ++tok_end;
    std::string token(p, tok_end);
    if (!token_prefix.empty()) {
      if (token.rfind(token_prefix, 0) != 0) {
        throw ParseError(path.string(), lineno, "token lacks prefix '" + token_prefix + "'");
      }
      token.erase(0, token_prefix.size());
    }
    out.tokens.push_back(std::move(token));
    p = tok_end;
    for (long long j = 0; j < d; ++j) {
      while (p < end && *p == ' ') ++p;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw ParseError(path.string(), lineno, "expected " + std::to_string(d) + " values");
      out.vectors(i, j) = v;
      p = next;
    }
    while (p < end && (*p == ' ' || *p == '\r')) ++p;
    if (p != end) throw ParseError(path.string(), lineno, "trailing fields");
  }
  return out;
}

}  // namespace mohone
