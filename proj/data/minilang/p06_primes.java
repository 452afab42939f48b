int countPrimes(int limit) {
  int count = 0;
  for (int n = 2; n <= limit; n++) {
    boolean prime = true;
    for (int d = 2; d * d <= n; d++) {
      if (n % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) {
      count++;
    }
  }
  return count;
}
