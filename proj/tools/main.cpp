// Placeholder CLI wired up after the solver modules land.
int main() { return 0; }
