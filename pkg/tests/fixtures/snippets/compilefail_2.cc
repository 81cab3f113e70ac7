#include <vector>

int main() {
    const int n = 32;
    std::vector<int> a(n, 1)
    int total = 0;
    for (int i = 0; i < n; ++i) {
        total += a[i];
    }
    int doubled = total + total;
    int tripled = doubled + total;
    return tripled > 0 ? 0 : 1;
}
