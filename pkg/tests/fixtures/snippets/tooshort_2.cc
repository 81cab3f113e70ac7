#include <vector>

int main() {
    std::vector<int> xs(5, 3);
    int total = 0;
    for (int x : xs) {
        total += x;
    }
    return total;
}
