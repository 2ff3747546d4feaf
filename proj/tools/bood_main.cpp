#include <string>
#include <vector>

#include "bood/cli.hpp"

int main(int argc, char** argv) {
  return bood::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
