#pragma once

#include <string>

#include "pickt/core/real.hpp"
#include "pickt/data/features.hpp"
#include "pickt/han/han.hpp"

namespace pickt::model {

/// Embedding rows per categorical feature (including UNK and start rows).
struct VocabSizes {
  Index question = 2;
  Index question_type = 2;
  Index difficulty = 2;
  Index discrimination = 2;
  Index activity = 2;
  Index concept_id = 2;
  Index area = 2;
  Index content_type = 2;

  static VocabSizes from(const data::Vocabularies& vocab);
  /// Sizes of the larger proprietary deployment the parameter budget refers
  /// to: 14,393 questions and 310 concepts plus small metadata vocabularies.
  static VocabSizes reference();
};

struct ModelConfig {
  Index encoder_layers = 4;
  Index decoder_layers = 4;
  Index heads = 8;
  Index d_hidden = 512;
  Index d_intermediate = 512;
  Real dropout = Real(0.1);
  Index max_seq_len = 256;
  bool han = true;
  han::HanConfig han_config;  // out_dim follows d_hidden
  VocabSizes vocab;

  Index head_dim() const { return d_hidden / heads; }
  /// Throws ParameterError on non-positive sizes, d_hidden % heads != 0,
  /// dropout outside [0, 1) or a HAN output width different from d_hidden.
  void validate() const;

  /// The selected hyperparameter row: 4+4 layers, 8 heads, width 512.
  static ModelConfig selected(const VocabSizes& vocab);
  /// L=4, d=8, one layer each side, one head; used for gradient checks.
  static ModelConfig tiny(const VocabSizes& vocab);
};

}  // namespace pickt::model
