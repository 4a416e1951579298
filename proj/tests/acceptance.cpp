// Acceptance gate: one criterion per invocation, selected by argv[1].
// Each criterion prints exactly one [PASS]/[FAIL] line and exits 0/1.

#include <cstdio>
#include <cstdlib>
#include <string>

namespace {

bool not_implemented(int n) {
  std::printf("[FAIL] criterion %d: not implemented\n", n);
  return false;
}

bool criterion_1() { return not_implemented(1); }
bool criterion_2() { return not_implemented(2); }
bool criterion_3() { return not_implemented(3); }
bool criterion_4() { return not_implemented(4); }
bool criterion_5() { return not_implemented(5); }
bool criterion_6() { return not_implemented(6); }
bool criterion_7() { return not_implemented(7); }
bool criterion_8() { return not_implemented(8); }
bool criterion_9() { return not_implemented(9); }
bool criterion_10() { return not_implemented(10); }

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
    return 2;
  }
  const int n = std::atoi(argv[1]);
  bool ok = false;
  switch (n) {
    case 1: ok = criterion_1(); break;
    case 2: ok = criterion_2(); break;
    case 3: ok = criterion_3(); break;
    case 4: ok = criterion_4(); break;
    case 5: ok = criterion_5(); break;
    case 6: ok = criterion_6(); break;
    case 7: ok = criterion_7(); break;
    case 8: ok = criterion_8(); break;
    case 9: ok = criterion_9(); break;
    case 10: ok = criterion_10(); break;
    default:
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 2;
  }
  return ok ? 0 : 1;
}
