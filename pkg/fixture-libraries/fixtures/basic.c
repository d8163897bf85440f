/* Baseline fixture: six exported functions, five of them fuzzable.
 *
 * get_version takes no parameters, so signature inference excludes it
 * (nothing to marshal fuzz bytes into). Everything else reads at least
 * one argument register. No libc calls: the bodies are self-contained
 * loops so disassembly-based inference sees the same code everywhere.
 */
#include <stdint.h>

int64_t add(int64_t a, int64_t b) { return a + b; }

char *concat(char *dst, const char *src) {
  char *d = dst;
  while (*d) {
    d++;
  }
  while ((*d++ = *src++)) {
  }
  return dst;
}

int64_t parse_buf(const uint8_t *buf, int64_t n) {
  int64_t acc = 0;
  for (int64_t i = 0; i < n; i++) {
    acc = acc * 31 + buf[i];
  }
  return acc;
}

void get_version(void) {}

void reg_callback(int64_t (*cb)(int64_t)) { cb(7); }

int64_t process_blob(uint8_t *dst, const uint8_t *src, int64_t n) {
  for (int64_t i = 0; i < n; i++) {
    dst[i] = (uint8_t)(src[i] ^ 0x5a);
  }
  return n;
}
