#!/usr/bin/env python3
# One adversarial round in slow motion: Gumbel rollouts become fake pairs,
# the critic takes k clipped steps, then the generator updates through the
# frozen critic via straight-through soft rows.

import numpy as np

import chatgan as cg
import chatgan.data as D
from chatgan import tensor as T
from chatgan.optim import RMSProp, zero_grads

rng = np.random.default_rng(5)
pairs = [D.DialoguePair(f"w{i % 5} w{(i + 1) % 5}", f"w{(i + 2) % 5} w{(i + 3) % 5}")
         for i in range(12)]
texts = [D.tokenize(p.question) for p in pairs] + [D.tokenize(p.answer) for p in pairs]
vocab = D.Vocab.build(texts, min_frequency=1, max_size=20)
batches = D.make_batches(pairs, vocab, max_len=8, batch_size=6)

gen = cg.GeneratorModel(cg.GeneratorConfig(
    vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=16,
    embed_dim=16, max_len=8, dropout=0.0), seed=1)
critic = cg.CriticModel(cg.CriticConfig(
    vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=16,
    embed_dim=16, max_len=8, dropout=0.0), seed=2)

batch = batches[0]
questions = [batch.question_seq(i) for i in range(batch.size)]
cap = critic.config.pair_capacity
real = [cg.PairInput.from_real(questions[i], batch.answer_seq(i), cap)
        for i in range(batch.size)]

# --- k critic steps: real pairs vs hard rollouts, weights clipped after each
critic_params = critic.named_parameters()
critic_opt = RMSProp(lr=3e-4)
for step in range(3):
    with T.no_grad():
        rollouts = [gen.gumbel_generate(q, rng) for q in questions]
    fake = [cg.PairInput.from_generated(q, r, cap, rows="hard")
            for q, r in zip(questions, rollouts)]
    zero_grads(critic_params)
    loss_c = cg.critic_loss(critic, real, fake)
    cg.backward(loss_c)
    critic_opt.step(critic_params)
    cg.clip_weights(critic, 0.01)
    biggest = max(float(np.abs(t.data).max()) for t in critic_params.values())
    print(f"critic step {step}: loss {loss_c.item():+.5f}, max |w| {biggest:.4f}")

# --- one generator step through the frozen critic
gen_params = gen.named_parameters()
gen_opt = RMSProp(lr=3e-4)
rollouts = [gen.gumbel_generate(q, rng) for q in questions]
fake = [cg.PairInput.from_generated(q, r, cap) for q, r in zip(questions, rollouts)]
zero_grads(critic_params)  # clear the critic's own step grads to show the freeze
zero_grads(gen_params)
loss_g = cg.generator_adv_loss(critic, fake)
cg.backward(loss_g)
gen_opt.step(gen_params)
print(f"generator step: loss {loss_g.item():+.5f}")
print("critic params untouched by generator backward:",
      all(t.grad is None for t in critic_params.values()))

sample = rollouts[0]
print("one rollout:", " ".join(vocab.decode(sample.hard.ids)))

# the same schedule, orchestrated: one epoch with bookkeeping
state = cg.TrainState(rng=rng, pretrained=True)
cg.adversarial_epoch(gen, critic, batches, cg.TrainConfig(
    critic_steps_k=2, clip_c=0.01, lr=3e-4), state)
print(f"\nepoch history: {len(state.history)} records "
      f"({sum(r.loss_c is not None for r in state.history)} critic, "
      f"{sum(r.loss_g is not None for r in state.history)} generator)")
