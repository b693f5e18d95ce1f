#include "pickt/model/config.hpp"

#include "pickt/core/error.hpp"

namespace pickt::model {

VocabSizes VocabSizes::from(const data::Vocabularies& v) {
  VocabSizes s;
  s.question = v.question.size();
  s.question_type = v.question_type.size();
  s.difficulty = v.difficulty.size();
  s.discrimination = v.discrimination.size();
  s.activity = v.activity.size();
  s.concept_id = v.concept_id.size();
  s.area = v.area.size();
  s.content_type = v.content_type.size();
  return s;
}

VocabSizes VocabSizes::reference() {
  VocabSizes s;
  const Index reserved = data::Vocabulary::kFirst;
  s.question = 14393 + reserved;
  s.question_type = 4 + reserved;
  s.difficulty = 5 + reserved;
  s.discrimination = 5 + reserved;
  s.activity = 4 + reserved;
  s.concept_id = 310 + reserved;
  s.area = 8 + reserved;
  s.content_type = 4 + reserved;
  return s;
}

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v <= 0) throw ParameterError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(encoder_layers, "model.layers (encoder)");
  positive(decoder_layers, "model.layers (decoder)");
  positive(heads, "model.heads");
  positive(d_hidden, "model.d_hidden");
  positive(d_intermediate, "model.d_intermediate");
  positive(max_seq_len, "model.max_seq_len");
  if (d_hidden % heads != 0) {
    throw ParameterError("model.d_hidden " + std::to_string(d_hidden) + " is not divisible by model.heads " +
                         std::to_string(heads));
  }
  if (!(dropout >= 0 && dropout < 1)) throw ParameterError("model.dropout must lie in [0, 1)");
  for (Index v : {vocab.question, vocab.question_type, vocab.difficulty, vocab.discrimination, vocab.activity,
                  vocab.concept_id, vocab.area, vocab.content_type}) {
    positive(v, "vocabulary size");
  }
  if (han) {
    han_config.validate();
    if (han_config.out_dim != d_hidden) {
      throw ParameterError("HAN output width " + std::to_string(han_config.out_dim) + " must equal model.d_hidden " +
                           std::to_string(d_hidden));
    }
  }
}

ModelConfig ModelConfig::selected(const VocabSizes& vocab) {
  ModelConfig c;
  c.vocab = vocab;
  return c;
}

ModelConfig ModelConfig::tiny(const VocabSizes& vocab) {
  ModelConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 1;
  c.d_hidden = 8;
  c.d_intermediate = 8;
  c.dropout = 0;
  c.max_seq_len = 4;
  c.han_config = {4, 4, 1, 8};
  c.vocab = vocab;
  return c;
}

}  // namespace pickt::model
