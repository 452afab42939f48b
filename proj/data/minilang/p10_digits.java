int digitSum(int x) {
  int sum = 0;
  if (x < 0) {
    x = -x;
  }
  while (x > 0) {
    int d = x % 10;
    sum += d;
    x /= 10;
  }
  printResult(sum);
  return sum;
}
