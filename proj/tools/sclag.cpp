#include <cstdio>
int main() { std::puts("sclag placeholder"); }
