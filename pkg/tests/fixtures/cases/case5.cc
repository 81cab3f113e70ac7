#include <algorithm>
#include <cstdio>
#include <vector>

int main() {
    const int n = 128;
    const int iters = 20;
    std::vector<double> grid(n * n, 0.0), next(n * n, 0.0);
    for (int i = 0; i < n; ++i) {
        grid[i] = 1.0;
        grid[(n - 1) * n + i] = 2.0;
    }
    next = grid;
    for (int it = 0; it < iters; ++it) {
        for (int i = 1; i < n - 1; ++i) {
            for (int j = 1; j < n - 1; ++j) {
                next[i * n + j] = 0.25 * (grid[(i - 1) * n + j] + grid[(i + 1) * n + j]
                                          + grid[i * n + j - 1] + grid[i * n + j + 1]);
            }
        }
        std::swap(grid, next);
    }
    double total = 0.0;
    for (int i = 0; i < n * n; ++i) {
        total += grid[i];
    }
    std::printf("total=%.6f\n", total);
    return 0;
}
