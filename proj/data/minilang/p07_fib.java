long fib(int n) {
  long a = 0;
  long b = 1;
  int i = 0;
  while (i < n) {
    long next = a + b;
    a = b;
    b = next;
    i = i + 1;
  }
  return a;
}
