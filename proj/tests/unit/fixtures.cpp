#include "helpers.hpp"

namespace testutil {

using namespace advinfer;

const Trained& trained() {
  static const Trained t = [] {
    CorpusBundle b = gen_synthetic_corpus(small_spec(120), 8);
    Generator g(small_gen_config(b.vocab, 16), 1);
    MleConfig mc;
    mc.epochs = 3;
    mc.seed = 2;
    train_mle(g, b.vocab, b.train, mc);
    std::map<DiscKind, std::unique_ptr<Discriminator>> d;
    for (DiscKind k : {DiscKind::visual, DiscKind::language, DiscKind::pairwise, DiscKind::single}) {
      DiscConfig dc = small_disc_config(k, b.vocab);
      dc.embed = 16;
      dc.hidden = 16;
      dc.fusion = 16;
      auto disc = make_discriminator(dc, 4);
      DiscTrainConfig tc;
      tc.epochs = 4;
      tc.adam.lr = 2e-3;
      tc.seed = 6;
      train_discriminator(*disc, b.vocab, b.train, &g, tc);
      d.emplace(k, std::move(disc));
    }
    return Trained{std::move(b), std::move(g), std::move(d)};
  }();
  return t;
}

}  // namespace testutil
