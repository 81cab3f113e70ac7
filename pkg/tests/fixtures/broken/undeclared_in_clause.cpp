#include <vector>

int main() {
    int n = 100;
    std::vector<double> a(n, 1.5);
    double total = 0.0;
    #pragma omp parallel for private(tmp) reduction(+:total)
    for (int i = 0; i < n; ++i) {
        total += a[i];
    }
    return total > 0 ? 0 : 1;
}
