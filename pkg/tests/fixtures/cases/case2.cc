#include <cstdio>
#include <vector>

int main() {
    const int n = 300000;
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i % 31) * 0.125;
        y[i] = (i % 17) * 0.5;
    }
    double dot = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += x[i] * y[i];
    }
    std::printf("dot=%.6f\n", dot);
    return 0;
}
