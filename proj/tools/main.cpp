#include <string>
#include <vector>

#include "gmocat/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gmocat::cli::run(args);
}
