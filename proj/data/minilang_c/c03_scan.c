int main(void) {
  int n, i, s = 0;
  int arr[100];
  scanf("%d", &n);
  for (i = 0; i < n; i++) {
    scanf("%d", &arr[i]);
    s += arr[i];
  }
  while (s > 100) s -= 100;
  printf("%d\n", s);
  return 0;
}
