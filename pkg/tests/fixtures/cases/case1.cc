#include <cstdio>
#include <vector>

int main() {
    const int n = 200000;
    std::vector<double> a(n), b(n), c(n);
    for (int i = 0; i < n; ++i) {
        a[i] = 0.5 * (i % 97);
        b[i] = 0.25 * (i % 53);
    }
    for (int i = 0; i < n; ++i) {
        c[i] = a[i] + b[i];
    }
    double checksum = 0.0;
    for (int i = 0; i < n; ++i) {
        checksum += c[i];
    }
    std::printf("checksum=%.6f\n", checksum);
    return 0;
}
