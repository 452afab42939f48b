int oddSum(int n) {
  int s = 0;
  int k = 0;
  while (k < n) {
    k++;
    if (k % 2 == 0) {
      continue;
    }
    s = s + k;
  }
  return s;
}
