#include <vector>

int main() {
    int n = 100;
    std::vector<int> a(n, 1);
    long sum = 0;
    #pragma omp parallel for default(none) reduction(+:sum)
    for (int i = 0; i < n; ++i) {
        sum += a[i];
    }
    return sum == n ? 0 : 1;
}
