#ifndef TIKZBENCH_H
#define TIKZBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_UTF8 = 2,
  TB_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The code did not parse; the out-value still holds the diagnostic count.
   */
  TB_STATUS_PARSE_ERROR = 4,
  /**
   * A metric rejected its input.
   */
  TB_STATUS_METRIC_ERROR = 5,
  TB_STATUS_PANIC = 6,
} TbStatus;

typedef enum TbTextMetric {
  TB_TEXT_METRIC_BLEU = 0,
  TB_TEXT_METRIC_ROUGE_L = 1,
  TB_TEXT_METRIC_CHR_F = 2,
  TB_TEXT_METRIC_EDIT_DISTANCE = 3,
  TB_TEXT_METRIC_CODE_BLEU = 4,
  TB_TEXT_METRIC_RUBY = 5,
} TbTextMetric;

/**
 * Opaque diagram-code handle.
 */
typedef struct TbDiagramCode TbDiagramCode;

typedef struct TbGraphStats {
  uintptr_t nodes;
  uintptr_t edges;
  /**
   * Edge endpoints naming no declared node.
   */
  uintptr_t dangling;
} TbGraphStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *tb_version(void);

/**
 * Message for the last failed call on this thread, empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Creates a handle from NUL-terminated UTF-8 source.
 */
enum TbStatus tb_code_new(const char *source, struct TbDiagramCode **out);

/**
 * Releases a handle. Null is ignored.
 */
void tb_code_free(struct TbDiagramCode *code);

/**
 * Parses the code. `TB_STATUS_OK` when clean, `TB_STATUS_PARSE_ERROR`
 * otherwise; `diagnostics` receives the number of problems either way.
 */
enum TbStatus tb_code_validate(const struct TbDiagramCode *code, uintptr_t *diagnostics);

/**
 * Quick structural check without TeX: the same rules the pipeline uses
 * when no compiler is installed.
 */
enum TbStatus tb_code_check_fast(const struct TbDiagramCode *code, bool *passed);

enum TbStatus tb_code_token_count(const struct TbDiagramCode *code, uintptr_t *count);

/**
 * Node and edge counts of a code that parses.
 */
enum TbStatus tb_code_graph_stats(const struct TbDiagramCode *code, struct TbGraphStats *stats);

/**
 * Scores `candidate` against `reference` on the 0-100 scale.
 */
enum TbStatus tb_text_score(enum TbTextMetric metric,
                            const struct TbDiagramCode *candidate,
                            const struct TbDiagramCode *reference,
                            double *value);

/**
 * Fréchet distance between two row-major feature matrices of width `dim`.
 */
enum TbStatus tb_fid(const double *real,
                     uintptr_t n_real,
                     const double *generated,
                     uintptr_t n_generated,
                     uintptr_t dim,
                     double *value);

/**
 * Kernel distance: mean and spread over seeded subsets.
 */
enum TbStatus tb_kid(const double *real,
                     uintptr_t n_real,
                     const double *generated,
                     uintptr_t n_generated,
                     uintptr_t dim,
                     uintptr_t subsets,
                     uintptr_t subset_size,
                     uint64_t seed,
                     double *mean,
                     double *std);

/**
 * Inception score of an `n×k` row-major logit matrix.
 */
enum TbStatus tb_inception_score(const double *logits,
                                 uintptr_t n,
                                 uintptr_t k,
                                 uintptr_t splits,
                                 double *mean,
                                 double *std);

/**
 * SSIM in [-1, 1] of two 8-bit grayscale images of the same size, row-major.
 */
enum TbStatus tb_ssim_gray(const uint8_t *a,
                           const uint8_t *b,
                           uint32_t width,
                           uint32_t height,
                           double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIKZBENCH_H */
