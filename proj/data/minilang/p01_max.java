boolean f(int a, int b) {
  if (a > b) {
    return true;
  }
  return false;
}
