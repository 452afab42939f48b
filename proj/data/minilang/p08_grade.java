char grade(int score) {
  char g = 'F';
  if (score >= 90) {
    g = 'A';
  } else if (score >= 80) {
    g = 'B';
  } else if (score >= 70) {
    g = 'C';
  }
  System.out.println(g);
  return g;
}
