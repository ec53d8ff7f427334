#include <iostream>

#include "socnn_cli/app.hpp"

int main(int argc, char** argv) {
  return socnn::cli::run_app({argv + 1, argv + argc}, std::cout, std::cerr);
}
