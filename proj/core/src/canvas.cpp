#include "xmodal/canvas.hpp"

#include <fstream>
#include <string>

#include "xmodal/error.hpp"

namespace xmodal {

void write_ppm(const Canvas& canvas, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out << "P6\n" << canvas.width << ' ' << canvas.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data.data()),
            static_cast<std::streamsize>(canvas.data.size()));
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

namespace {

// Reads one whitespace-delimited PPM header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path,
              const char* what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InputError(
        format_msg(path.string(), ": invalid PPM ", what, " '", tok, "'"));
  }
}

}  // namespace

Canvas read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(format_msg("cannot open ", path.string()));
  if (next_token(in) != "P6") {
    throw InputError(format_msg(path.string(), ": not a binary PPM (P6)"));
  }
  const int width = parse_dim(next_token(in), path, "width");
  const int height = parse_dim(next_token(in), path, "height");
  const int maxval = parse_dim(next_token(in), path, "maxval");
  if (maxval != 255) {
    throw InputError(
        format_msg(path.string(), ": unsupported PPM maxval ", maxval));
  }
  // Header ends after exactly one whitespace byte, already consumed by
  // next_token's terminating isspace read.
  Canvas canvas(height, width);
  in.read(reinterpret_cast<char*>(canvas.data.data()),
          static_cast<std::streamsize>(canvas.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(canvas.data.size())) {
    throw InputError(format_msg(path.string(), ": truncated pixel data"));
  }
  return canvas;
}

}  // namespace xmodal
