#ifndef THYROLABEL_H
#define THYROLABEL_H

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum TlStatus {
  TL_STATUS_OK = 0,
  TL_STATUS_NULL_ARGUMENT = 1,
  TL_STATUS_INVALID_UTF8 = 2,
  TL_STATUS_VALIDATION = 3,
  TL_STATUS_IO = 4,
  TL_STATUS_PARSE = 5,
  TL_STATUS_PANIC = 6,
} TlStatus;

// Opaque bitmap font used by OCR.
typedef struct TlFont TlFont;

// Opaque 8-bit grayscale image.
typedef struct TlRaster TlRaster;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tl_version(void);

// Message of the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *tl_last_error(void);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void tl_string_free(char *s);

struct TlFont *tl_font_default(void);

// # Safety
// `font` must be null or a handle from `tl_font_default`, freed once.
void tl_font_free(struct TlFont *font);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TlStatus tl_raster_read_pgm(const char *path, struct TlRaster **out);

// Copies `width * height` row-major bytes into a new raster.
//
// # Safety
// `pixels` must point to `len` readable bytes; `out` must be writable.
enum TlStatus tl_raster_from_pixels(size_t width,
                                    size_t height,
                                    const uint8_t *pixels,
                                    size_t len,
                                    struct TlRaster **out);

// # Safety
// `raster` must be null or a live handle.
size_t tl_raster_width(const struct TlRaster *raster);

// # Safety
// `raster` must be null or a live handle.
size_t tl_raster_height(const struct TlRaster *raster);

// # Safety
// `raster` must be null or a handle from this library, freed once.
void tl_raster_free(struct TlRaster *raster);

// Caliper hits as a JSON array. `config_json` may be null for defaults.
//
// # Safety
// Pointers must be valid as documented on the individual arguments.
enum TlStatus tl_detect_calipers(const struct TlRaster *raster,
                                 const char *config_json,
                                 char **out_json);

// Banner fields and on-image measurements as a JSON object with keys
// `banner` and `measurements`.
//
// # Safety
// Pointers must be valid as documented on the individual arguments.
enum TlStatus tl_ocr_image(const struct TlRaster *raster,
                           const struct TlFont *font,
                           char **out_json);

// # Safety
// `text` must be a NUL-terminated string; `out_json` must be writable.
enum TlStatus tl_parse_banner(const char *text, char **out_json);

// # Safety
// `report` must be a NUL-terminated string; `out_json` must be writable.
enum TlStatus tl_parse_pathology(const char *report, char **out_json);

// `side` is one of "left", "right", "isthmus" (abbreviations accepted).
//
// # Safety
// `report` and `side` must be NUL-terminated strings; `out_json` must be
// writable.
enum TlStatus tl_extract_measurements(const char *report, const char *side, char **out_json);

// Runs the pipeline over a corpus directory; writes JSON-lines results.
//
// # Safety
// `corpus_dir` must be a NUL-terminated string, `config_json` null or a
// NUL-terminated string, `out_jsonl` writable.
enum TlStatus tl_run_corpus(const char *corpus_dir,
                            const char *config_json,
                            size_t parallelism,
                            char **out_jsonl);

// Scores JSON-lines results against a manifest (JSON text).
//
// # Safety
// `results_jsonl` and `manifest_json` must be NUL-terminated strings;
// `out_json` must be writable.
enum TlStatus tl_evaluate(const char *results_jsonl, const char *manifest_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THYROLABEL_H */
