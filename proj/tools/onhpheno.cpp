#include "onh/cli.hpp"
#include "onh/runtime.hpp"

int main(int argc, char** argv) {
  onh::tune_allocator();
  return onh::cli::dispatch(argc, argv);
}
