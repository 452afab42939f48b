#include <stdio.h>
int max(int a, int b) {
  int m = a;
  if (b > a) {
    m = b;
  }
  printf("%d\n", m);
  return m;
}
