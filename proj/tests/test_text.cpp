#include <random>
#include <sstream>

#include "doctest.h"
#include "prqa/error.hpp"
#include "prqa/text.hpp"
#include "support/temp_dir.hpp"

using namespace prqa;

TEST_CASE("tokenize") {
  CHECK(tokenize("Is this fit with 2002 Camry 2.4 L ?") ==
        TokenList{"is", "this", "fit", "with", "2002", "camry", "2", ".", "4", "l", "?"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Velcro, do they slide") ==
        TokenList{"velcro", ",", "do", "they", "slide"});
  // no-break space and ideographic space separate tokens; other UTF-8 is kept
  CHECK(tokenize("caf\xC3\xA9\xC2\xA0ok\xE3\x80\x80x") == TokenList{"caf\xC3\xA9", "ok", "x"});
  CHECK(tokenize("  \t\n ") == TokenList{});
  CHECK(tokenize("don't!!") == TokenList{"don", "'", "t", "!", "!"});
}

TEST_CASE("build_vocab") {
  SUBCASE("frequency order") {
    std::vector<TokenList> corpus{{"a", "a", "b"}};
    Vocabulary v = build_vocab(corpus, 1);
    CHECK(v.size() == 4);
    CHECK(v.index("a") == 2);
    CHECK(v.index("b") == 3);
  }
  SUBCASE("threshold excludes everything") {
    std::vector<TokenList> corpus{{"a", "b"}};
    Vocabulary v = build_vocab(corpus, 2);
    CHECK(v.size() == 2);
    CHECK(v.index("a") == Vocabulary::unk);
  }
  SUBCASE("ties broken lexicographically") {
    std::vector<TokenList> corpus{{"b", "a"}, {"b", "a"}};
    Vocabulary v = build_vocab(corpus, 1);
    CHECK(v.index("a") == 2);
    CHECK(v.index("b") == 3);
  }
  SUBCASE("reserved tokens never remapped") {
    std::vector<TokenList> corpus{{"<pad>", "<unk>", "x"}};
    Vocabulary v = build_vocab(corpus, 1);
    CHECK(v.token(0) == "<pad>");
    CHECK(v.token(1) == "<unk>");
    CHECK(v.index("x") == 2);
    CHECK(v.size() == 3);
  }
  CHECK_THROWS_AS(build_vocab({}, 0), Error);
}

TEST_CASE("vocabulary round-trips through its token list") {
  std::vector<TokenList> corpus{{"z", "y", "y", "x", "x", "x"}};
  Vocabulary v = build_vocab(corpus, 1);
  Vocabulary w = Vocabulary::from_tokens(v.tokens());
  CHECK(w.tokens() == v.tokens());
  for (const auto& t : v.tokens()) CHECK(w.index(t) == v.index(t));
  CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b"}), Error);
}

TEST_CASE("encode_sequence") {
  std::vector<TokenList> corpus{{"a", "b", "c", "d", "e"}};
  Vocabulary v = build_vocab(corpus, 1);
  TokenList one{"a"};
  EncodedSequence s = encode_sequence(one, v, 3);
  CHECK(s.indices == std::vector<int>{2, 0, 0});
  CHECK(s.length == 1);

  TokenList five{"a", "b", "c", "d", "e"};
  s = encode_sequence(five, v, 3);
  CHECK(s.indices == std::vector<int>{2, 3, 4});
  CHECK(s.length == 3);

  TokenList oov{"zzz"};
  CHECK(encode_sequence(oov, v, 2).indices[0] == Vocabulary::unk);
  CHECK_THROWS_AS(encode_sequence(one, v, 0), Error);
}

TEST_CASE("encode then decode is the identity on in-vocabulary sequences") {
  std::mt19937_64 rng(5);
  std::vector<std::string> words{"w0", "w1", "w2", "w3", "w4", "w5", "w6"};
  std::vector<TokenList> corpus{words};
  Vocabulary v = build_vocab(corpus, 1);
  for (int trial = 0; trial < 200; ++trial) {
    TokenList seq(1 + rng() % 12);
    for (auto& t : seq) t = words[rng() % words.size()];
    EncodedSequence e = encode_sequence(seq, v, 12);
    CHECK(decode_sequence(e, v) == seq);
    for (int idx : e.indices) CHECK(static_cast<std::size_t>(idx) < v.size());
  }
}

TEST_CASE("load_embeddings") {
  testing::TempDir dir;
  std::vector<TokenList> corpus{{"x", "x", "y"}};
  Vocabulary v = build_vocab(corpus, 1);
  const auto file = dir.write("emb.txt", "x 0.5 -1 2.25\nother 1 1 1\n");

  EmbeddingTable t = load_embeddings(file, v, 42, 3);
  CHECK(t.rows() == v.size());
  CHECK(t.dim() == 3);
  const std::size_t xr = static_cast<std::size_t>(v.index("x"));
  CHECK(t.matrix.at(xr, 0) == 0.5);
  CHECK(t.matrix.at(xr, 1) == -1.0);
  CHECK(t.matrix.at(xr, 2) == 2.25);
  CHECK(t.pretrained[xr]);

  const std::size_t yr = static_cast<std::size_t>(v.index("y"));
  CHECK_FALSE(t.pretrained[yr]);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(t.matrix.at(yr, j)) <= 0.1);
    CHECK(t.matrix.at(0, j) == 0.0);
    CHECK(std::abs(t.matrix.at(1, j)) <= 0.1);
  }
  CHECK_FALSE(t.matrix.requires_grad());

  EmbeddingTable again = load_embeddings(file, v, 42, 3);
  CHECK(std::vector<double>(again.matrix.values().begin(), again.matrix.values().end()) ==
        std::vector<double>(t.matrix.values().begin(), t.matrix.values().end()));

  const auto bad = dir.write("bad.txt", "x 1 2 3\ny 1 2\n");
  try {
    load_embeddings(bad, v, 1, 3);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  try {
    load_embeddings(dir / "missing.txt", v, 1, 3);
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("default embedding dimension is 300") {
  testing::TempDir dir;
  std::vector<TokenList> corpus{{"x"}};
  Vocabulary v = build_vocab(corpus, 1);
  std::ostringstream line;
  line << "x";
  for (int i = 0; i < 300; ++i) line << ' ' << i * 0.001;
  line << '\n';
  EmbeddingTable t = load_embeddings(dir.write("glove.txt", line.str()), v, 7);
  CHECK(t.dim() == 300);
  CHECK(t.matrix.at(2, 299) == doctest::Approx(0.299));
}
