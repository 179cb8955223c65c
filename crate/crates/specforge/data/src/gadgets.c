/* Spectre-V1 base gadgets, one victim function per file after splitting. */
#include <stddef.h>
#include <stdint.h>
#include <string.h>

size_t array1_size = 16;
uint8_t array1[16] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
uint8_t array2[256 * 512];
uint8_t array3[256 * 4096];
uint8_t temp = 0;
int array_size_mask = 15;
int global_condition = 0;
size_t prev = 0xff;

#ifdef EX1
void victim_function(size_t x) {
    if (x < array1_size)
        temp &= array2[array1[x] * 512];
}
#endif
#ifdef EX2
void leakByteLocalFunction(uint8_t k) { temp &= array2[(k) * 512]; }
void victim_function(size_t x) {
    if (x < array1_size)
        leakByteLocalFunction(array1[x]);
}
#endif
#ifdef EX3
__attribute__((noinline)) void leakByteNoinlineFunction(uint8_t k) { temp &= array2[(k) * 512]; }
void victim_function(size_t x) {
    if (x < array1_size)
        leakByteNoinlineFunction(array1[x]);
}
#endif
#ifdef EX4
void victim_function(size_t x) {
    if (x < array1_size)
        temp &= array2[array1[x << 1] * 512];
}
#endif
#ifdef EX5
void victim_function(size_t x) {
    int i;
    if (x < array1_size) {
        for (i = x - 1; i >= 0; i--)
            temp &= array2[array1[i] * 512];
    }
}
#endif
#ifdef EX6
void victim_function(size_t x) {
    if ((x & array_size_mask) == x)
        temp &= array2[array1[x] * 512];
}
#endif
#ifdef EX7
void victim_function(size_t x) {
    static size_t last_x = 0;
    if (x == last_x)
        temp &= array2[array1[x] * 512];
    if (x < array1_size)
        last_x = x;
}
#endif
#ifdef EX8
void victim_function(size_t x) {
    temp &= array2[array1[x < array1_size ? (x + 1) : 0] * 512];
}
#endif
#ifdef EX9
void victim_function(size_t x, int *x_is_safe) {
    if (*x_is_safe)
        temp &= array2[array1[x] * 512];
}
#endif
#ifdef EX10
void victim_function(size_t x, uint8_t k) {
    if (x < array1_size) {
        if (array1[x] == k)
            temp &= array2[0];
    }
}
#endif
#ifdef EX11
void victim_function(size_t x) {
    if (x < array1_size)
        temp = memcmp(&temp, array2 + (array1[x] * 512), 1);
}
#endif
#ifdef EX12
void victim_function(size_t x, size_t y) {
    if ((x + y) < array1_size)
        temp &= array2[array1[x + y] * 512];
}
#endif
#ifdef EX13
static inline int is_x_safe(size_t x) {
    if (x < array1_size)
        return 1;
    return 0;
}
void victim_function(size_t x) {
    if (is_x_safe(x))
        temp &= array2[array1[x] * 512];
}
#endif
#ifdef EX14
void victim_function(size_t x) {
    if (x < array1_size)
        temp &= array2[array1[x ^ 255] * 512];
}
#endif
#ifdef EX15
void victim_function(size_t *x) {
    if (*x < array1_size)
        temp &= array2[array1[*x] * 512];
}
#endif
#ifdef EX16
void victim_function(size_t x) {
    if (global_condition)
        x = 0;
    if (x < array1_size)
        temp &= array3[array1[x] * 4096];
}
#endif
#ifdef EX17
void victim_function(size_t x) {
    if (prev < array1_size)
        temp &= array2[array1[prev] * 512];
    prev = x;
}
#endif
