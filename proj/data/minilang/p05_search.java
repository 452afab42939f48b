int find(int[] values, int key) {
  int index = -1;
  for (int i = 0; i < values.length; i++) {
    if (values[i] == key) {
      index = i;
      break;
    }
  }
  System.out.println(index);
  return index;
}
