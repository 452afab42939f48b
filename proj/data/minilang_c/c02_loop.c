int count(int n) {
  int c = 0;
  for (int i = 0; i < n; i++) {
    if (i % 3 == 0) continue;
    c = c + 1;
  }
  return c;
}
