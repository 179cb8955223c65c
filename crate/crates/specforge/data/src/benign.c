/* General-purpose routines used as the benign assembly corpus. */
#include <stddef.h>
#include <stdint.h>
#include <string.h>

struct node { int key; struct node *next; };
struct point { double x, y; };

size_t str_length(const char *s) { size_t n = 0; while (s[n]) n++; return n; }
int str_compare(const char *a, const char *b) { while (*a && *a == *b) { a++; b++; } return (unsigned char)*a - (unsigned char)*b; }
void str_copy(char *dst, const char *src) { while ((*dst++ = *src++)) {} }
void mem_fill(uint8_t *p, uint8_t v, size_t n) { for (size_t i = 0; i < n; i++) p[i] = v; }
uint32_t hash_fnv(const uint8_t *p, size_t n) { uint32_t h = 2166136261u; for (size_t i = 0; i < n; i++) { h ^= p[i]; h *= 16777619u; } return h; }
uint32_t hash_djb(const char *s) { uint32_t h = 5381; int c; while ((c = *s++)) h = ((h << 5) + h) + c; return h; }
int sum_ints(const int *a, int n) { int s = 0; for (int i = 0; i < n; i++) s += a[i]; return s; }
int max_int(const int *a, int n) { int m = a[0]; for (int i = 1; i < n; i++) if (a[i] > m) m = a[i]; return m; }
void bubble_sort(int *a, int n) { for (int i = 0; i < n; i++) for (int j = 0; j + 1 < n - i; j++) if (a[j] > a[j + 1]) { int t = a[j]; a[j] = a[j + 1]; a[j + 1] = t; } }
void insertion_sort(int *a, int n) { for (int i = 1; i < n; i++) { int k = a[i], j = i - 1; while (j >= 0 && a[j] > k) { a[j + 1] = a[j]; j--; } a[j + 1] = k; } }
int binary_search(const int *a, int n, int key) { int lo = 0, hi = n - 1; while (lo <= hi) { int mid = lo + (hi - lo) / 2; if (a[mid] == key) return mid; if (a[mid] < key) lo = mid + 1; else hi = mid - 1; } return -1; }
int list_length(const struct node *n) { int c = 0; while (n) { c++; n = n->next; } return c; }
struct node *list_find(struct node *n, int key) { while (n && n->key != key) n = n->next; return n; }
struct node *list_reverse(struct node *n) { struct node *p = 0; while (n) { struct node *q = n->next; n->next = p; p = n; n = q; } return p; }
long factorial(int n) { long r = 1; while (n > 1) r *= n--; return r; }
long fib(int n) { long a = 0, b = 1; for (int i = 0; i < n; i++) { long t = a + b; a = b; b = t; } return a; }
unsigned gcd(unsigned a, unsigned b) { while (b) { unsigned t = a % b; a = b; b = t; } return a; }
int popcount32(uint32_t x) { int c = 0; while (x) { x &= x - 1; c++; } return c; }
uint32_t rotl32(uint32_t x, int r) { return (x << r) | (x >> (32 - r)); }
uint64_t xorshift64(uint64_t *s) { uint64_t x = *s; x ^= x << 13; x ^= x >> 7; x ^= x << 17; return *s = x; }
double dot(const double *a, const double *b, int n) { double s = 0; for (int i = 0; i < n; i++) s += a[i] * b[i]; return s; }
void axpy(double *y, const double *x, double a, int n) { for (int i = 0; i < n; i++) y[i] += a * x[i]; }
double point_dist2(struct point p, struct point q) { double dx = p.x - q.x, dy = p.y - q.y; return dx * dx + dy * dy; }
void mat_mul(const double *a, const double *b, double *c, int n) { for (int i = 0; i < n; i++) for (int j = 0; j < n; j++) { double s = 0; for (int k = 0; k < n; k++) s += a[i * n + k] * b[k * n + j]; c[i * n + j] = s; } }
int clamp(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }
int abs_diff(int a, int b) { return a > b ? a - b : b - a; }
void to_upper(char *s) { for (; *s; s++) if (*s >= 'a' && *s <= 'z') *s -= 32; }
int count_char(const char *s, char c) { int n = 0; for (; *s; s++) n += (*s == c); return n; }
int is_palindrome(const char *s, int n) { for (int i = 0, j = n - 1; i < j; i++, j--) if (s[i] != s[j]) return 0; return 1; }
uint8_t checksum8(const uint8_t *p, size_t n) { uint8_t c = 0; while (n--) c += *p++; return (uint8_t)~c; }
uint16_t crc16_step(uint16_t crc, uint8_t b) { crc ^= b; for (int i = 0; i < 8; i++) crc = (crc & 1) ? (crc >> 1) ^ 0xA001 : crc >> 1; return crc; }
int parse_int(const char *s) { int sign = 1, v = 0; if (*s == '-') { sign = -1; s++; } while (*s >= '0' && *s <= '9') v = v * 10 + (*s++ - '0'); return sign * v; }
void swap_bytes(uint8_t *a, uint8_t *b, size_t n) { for (size_t i = 0; i < n; i++) { uint8_t t = a[i]; a[i] = b[i]; b[i] = t; } }
int ring_push(int *buf, int *head, int cap, int v) { buf[*head] = v; *head = (*head + 1) % cap; return *head; }
