// Experiment runner; subcommands are wired up in main() below.

#include <cstdio>

int main() {
  std::puts("optionlab cli placeholder");
  return 0;
}
