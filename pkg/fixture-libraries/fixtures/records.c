/* Opaque-struct fixture: functions take a struct pointer and read its
 * fields at fixed offsets. Dereference evidence should upgrade the
 * first parameter from a plain integer to a pointer during inference.
 */
#include <stdint.h>

struct record {
  int64_t magic;
  int64_t size;
  unsigned char payload[32];
};

int64_t record_magic(const struct record *r) { return r->magic; }

int64_t record_size_ok(const struct record *r) {
  return r->size >= 0 && r->size <= 32;
}

int64_t record_sum(const struct record *r) {
  int64_t acc = r->magic;
  for (int64_t i = 0; i < r->size && i < 32; i++) {
    acc += r->payload[i];
  }
  return acc;
}
