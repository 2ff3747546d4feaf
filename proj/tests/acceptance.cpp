// placeholder while the unit suites come up; the real criteria follow.
#include <cstdio>
int main() { std::printf("acceptance: not yet implemented\n"); return 1; }
