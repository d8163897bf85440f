/* Pointer-crash fixture: every function walks a NUL-terminated string.
 *
 * The only safe driver for these passes a real buffer. A degraded
 * driver that feeds a raw 64-bit integer where the pointer belongs
 * dereferences garbage on the first iteration and dies immediately —
 * which is exactly the repair-loop bait this fixture exists to be.
 */
#include <stdint.h>

int64_t text_checksum(const char *s) {
  int64_t sum = 0;
  while (*s) {
    sum = sum * 131 + *s++;
  }
  return sum;
}

int64_t text_length(const char *s) {
  const char *p = s;
  while (*p) {
    p++;
  }
  return p - s;
}
