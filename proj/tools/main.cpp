#include <cstdio>

int main() {
  std::fprintf(stderr, "gridstate: no subcommand given\n");
  return 2;
}
