//! Per-step agent rules (move, harvest, trade, consume) and the run loop.

use super::{
    init_agents, init_landscape, mrs, welfare, welfare_of, Agent, GridCell, Landscape,
    PolicyVector, SimParams, SimResult, StateVector, StepRecord,
};
use crate::error::Result;
use crate::metrics::gini;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pick the agent's next position: the nearest unoccupied cell within vision
/// along the four cardinal directions (or the current cell) that maximizes
/// prospective welfare. Prospective welfare adds the cell's currently
/// harvestable stock to the agent's wealth and uses that cell's pollution;
/// sugar blocked by the production cap contributes nothing.
///
/// Ties are broken by smallest distance, then uniformly at random.
pub fn step_move(
    agent: &Agent,
    landscape: &Landscape,
    policy: &PolicyVector,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let mut best: Vec<(usize, usize, usize)> = Vec::new(); // (x, y, dist)
    let mut best_welfare = f64::MIN;
    let mut best_dist = usize::MAX;

    let mut consider = |x: usize, y: usize, dist: usize, landscape: &Landscape| {
        let cell = landscape.cell(x, y);
        let harvestable_sugar = if cell.pollution <= policy.production_cap {
            cell.sugar
        } else {
            0.0
        };
        let w = welfare_of(
            agent.sugar_wealth + harvestable_sugar,
            agent.spice_wealth + cell.spice,
            agent.sugar_metabolism,
            agent.spice_metabolism,
            cell.pollution,
        );
        if w > best_welfare {
            best_welfare = w;
            best_dist = dist;
            best.clear();
            best.push((x, y, dist));
        } else if w == best_welfare {
            if dist < best_dist {
                best_dist = dist;
                best.clear();
                best.push((x, y, dist));
            } else if dist == best_dist {
                best.push((x, y, dist));
            }
        }
    };

    consider(agent.x, agent.y, 0, landscape);
    let (ax, ay) = (agent.x as isize, agent.y as isize);
    for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
        for step in 1..=agent.vision as isize {
            let (x, y) = (ax + dx * step, ay + dy * step);
            if x < 0 || y < 0 || x >= landscape.width as isize || y >= landscape.height as isize {
                break;
            }
            let (x, y) = (x as usize, y as usize);
            if landscape.occupant(x, y).is_some() {
                continue;
            }
            consider(x, y, step as usize, landscape);
        }
    }

    if best.len() == 1 {
        (best[0].0, best[0].1)
    } else {
        let pick = best[rng.random_range(0..best.len())];
        (pick.0, pick.1)
    }
}

/// Harvest the agent's cell. Spice is always taken in full. Sugar is taken
/// in full only when the cell's pollution is at or below the production cap,
/// in which case the cell's pollution rises by beta times the harvested
/// amount. When the cap blocks the harvest, the sugar stays on the cell and
/// the agent receives the reinvestment subsidy as spice.
pub fn harvest(
    agent: &mut Agent,
    cell: &mut GridCell,
    policy: &PolicyVector,
    state: &StateVector,
) -> (f64, f64) {
    let spice = cell.spice;
    agent.spice_wealth += spice;
    cell.spice = 0.0;

    let sugar;
    if cell.pollution <= policy.production_cap {
        sugar = cell.sugar;
        agent.sugar_wealth += sugar;
        cell.sugar = 0.0;
        cell.pollution += state.pollution_rate * sugar;
    } else {
        sugar = 0.0;
        agent.spice_wealth += policy.reinvestment;
    }
    (sugar, spice)
}

/// Metabolic consumption. Sugar consumption is taxed at `consumption_tax`
/// with the taxed amount rebated 1:1 as spice, and pollutes the agent's cell
/// at rate beta per unit of sugar metabolism. The death check happens at the
/// end of the agent's sub-step, not here.
pub fn consume(
    agent: &mut Agent,
    cell: &mut GridCell,
    policy: &PolicyVector,
    state: &StateVector,
) {
    agent.sugar_wealth -= agent.sugar_metabolism * (1.0 + policy.consumption_tax);
    agent.spice_wealth -= agent.spice_metabolism;
    agent.spice_wealth += agent.sugar_metabolism * policy.consumption_tax;
    cell.pollution += state.pollution_rate * agent.sugar_metabolism;
}

/// One executed unit trade.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeExec {
    pub price: f64,
    /// Sugar moved from seller to buyer.
    pub sugar: f64,
    /// Spice paid by the buyer to the seller.
    pub spice: f64,
    /// Additional spice paid by the buyer and destroyed.
    pub tax: f64,
    /// True when agent `a` was the sugar buyer.
    pub a_bought_sugar: bool,
}

/// Bilateral bargaining between two adjacent agents at the geometric-mean
/// price. Sugar flows from the low-MRS to the high-MRS agent, one unit (or
/// 1/price units when price < 1) at a time. The buyer pays a trade tax on
/// the spice side, which is destroyed. Each unit trade executes only if both
/// welfares strictly increase and the MRS ordering does not flip.
pub fn trade(
    a: &mut Agent,
    b: &mut Agent,
    pollution_a: f64,
    pollution_b: f64,
    policy: &PolicyVector,
) -> Vec<TradeExec> {
    let mut executed = Vec::new();
    // hard bound on bargaining rounds; convergence is normally much faster
    for _ in 0..1000 {
        let (mrs_a, mrs_b) = (mrs(a), mrs(b));
        if !mrs_a.is_finite() || !mrs_b.is_finite() || mrs_a <= 0.0 || mrs_b <= 0.0 {
            break;
        }
        if mrs_a == mrs_b {
            break;
        }
        let price = (mrs_a * mrs_b).sqrt();
        let (sugar_qty, spice_qty) = if price >= 1.0 {
            (1.0, price)
        } else {
            (1.0 / price, 1.0)
        };
        let tax = policy.trade_tax * spice_qty;

        // higher MRS values sugar more: it buys
        let a_buys = mrs_a > mrs_b;
        let (buyer, seller, pol_buyer, pol_seller) = if a_buys {
            (&mut *a, &mut *b, pollution_a, pollution_b)
        } else {
            (&mut *b, &mut *a, pollution_b, pollution_a)
        };

        if seller.sugar_wealth <= sugar_qty || buyer.spice_wealth <= spice_qty + tax {
            break;
        }

        let buyer_after = Agent {
            sugar_wealth: buyer.sugar_wealth + sugar_qty,
            spice_wealth: buyer.spice_wealth - spice_qty - tax,
            ..buyer.clone()
        };
        let seller_after = Agent {
            sugar_wealth: seller.sugar_wealth - sugar_qty,
            spice_wealth: seller.spice_wealth + spice_qty,
            ..seller.clone()
        };

        let improves = welfare(&buyer_after, pol_buyer) > welfare(buyer, pol_buyer)
            && welfare(&seller_after, pol_seller) > welfare(seller, pol_seller);
        // buyer had the higher MRS; it must not drop below the seller's
        let ordering_kept = mrs(&buyer_after) >= mrs(&seller_after);
        if !improves || !ordering_kept {
            break;
        }

        buyer.sugar_wealth = buyer_after.sugar_wealth;
        buyer.spice_wealth = buyer_after.spice_wealth;
        seller.sugar_wealth = seller_after.sugar_wealth;
        seller.spice_wealth = seller_after.spice_wealth;
        executed.push(TradeExec {
            price,
            sugar: sugar_qty,
            spice: spice_qty,
            tax,
            a_bought_sugar: a_buys,
        });
    }
    executed
}

/// Run the full simulation: per step, agents act in shuffled order
/// (move, harvest, trade with neighbors, consume, death check), then
/// resources regrow one unit up to capacity. Step 0 records the initial
/// state, so the trace has `n_steps + 1` rows.
pub fn run_simulation(
    policy: &PolicyVector,
    state: &StateVector,
    params: &SimParams,
    seed: u64,
) -> Result<SimResult> {
    policy.validate()?;
    params.validate(state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut landscape = init_landscape(params, &mut rng)?;
    let mut agents = init_agents(params, state, &mut landscape, &mut rng)?;

    let mut steps = Vec::with_capacity(params.n_steps + 1);
    steps.push(record_step(0, &agents, &landscape));

    let mut order: Vec<usize> = (0..agents.len()).collect();
    for step in 1..=params.n_steps {
        order.shuffle(&mut rng);
        for &i in &order {
            if !agents[i].alive {
                continue;
            }
            // move
            let (nx, ny) = step_move(&agents[i], &landscape, policy, &mut rng);
            landscape.set_occupant(agents[i].x, agents[i].y, None);
            agents[i].x = nx;
            agents[i].y = ny;
            landscape.set_occupant(nx, ny, Some(agents[i].id));

            // harvest
            {
                let cell = landscape.cell_mut(nx, ny);
                let (a, c) = (&mut agents[i], cell);
                harvest(a, c, policy, state);
            }

            // trade with alive von Neumann neighbors, in random order
            let mut neighbor_ids: Vec<usize> = landscape
                .neighbors(nx, ny)
                .into_iter()
                .filter_map(|(x, y)| landscape.occupant(x, y))
                .collect();
            neighbor_ids.shuffle(&mut rng);
            for j in neighbor_ids {
                if j == i || !agents[j].alive {
                    continue;
                }
                let pol_i = landscape.cell(agents[i].x, agents[i].y).pollution;
                let pol_j = landscape.cell(agents[j].x, agents[j].y).pollution;
                let (lo, hi) = (i.min(j), i.max(j));
                let (head, tail) = agents.split_at_mut(hi);
                let (first, second) = (&mut head[lo], &mut tail[0]);
                if lo == i {
                    trade(first, second, pol_i, pol_j, policy);
                } else {
                    trade(second, first, pol_i, pol_j, policy);
                }
            }

            // consume, then the end-of-sub-step death check
            {
                let (x, y) = (agents[i].x, agents[i].y);
                let cell = landscape.cell_mut(x, y);
                consume(&mut agents[i], cell, policy, state);
            }
            if agents[i].sugar_wealth <= 0.0 || agents[i].spice_wealth <= 0.0 {
                agents[i].alive = false;
                landscape.set_occupant(agents[i].x, agents[i].y, None);
            }
        }

        // regrowth: 1 unit per step up to capacity
        for cell in &mut landscape.cells {
            cell.sugar = (cell.sugar + 1.0).min(cell.sugar_capacity);
            cell.spice = (cell.spice + 1.0).min(cell.spice_capacity);
        }

        steps.push(record_step(step, &agents, &landscape));
    }

    let survivors = agents
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.clone(), landscape.cell(a.x, a.y).pollution))
        .collect();
    Ok(SimResult {
        n_agents_initial: params.n_agents,
        steps,
        survivors,
    })
}

fn record_step(step: usize, agents: &[Agent], landscape: &Landscape) -> StepRecord {
    let alive: Vec<&Agent> = agents.iter().filter(|a| a.alive).collect();
    let mut welfares: Vec<f64> = alive
        .iter()
        .map(|a| welfare(a, landscape.cell(a.x, a.y).pollution))
        .collect();
    welfares.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let (mean_w, median_w) = if welfares.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = welfares.iter().sum::<f64>() / welfares.len() as f64;
        let mid = welfares.len() / 2;
        let median = if welfares.len() % 2 == 1 {
            welfares[mid]
        } else {
            (welfares[mid - 1] + welfares[mid]) / 2.0
        };
        (mean, median)
    };

    // log-welfare decomposition, averaged over agents with positive wealth
    let mut log_sugar = 0.0;
    let mut log_spice = 0.0;
    let mut n_pos = 0usize;
    for a in &alive {
        if a.sugar_wealth > 0.0 && a.spice_wealth > 0.0 {
            let (ls, lp) = crate::metrics::welfare_decomposition(a);
            log_sugar += ls;
            log_spice += lp;
            n_pos += 1;
        }
    }
    let (log_sugar, log_spice) = if n_pos > 0 {
        (log_sugar / n_pos as f64, log_spice / n_pos as f64)
    } else {
        (f64::NAN, f64::NAN)
    };

    StepRecord {
        step,
        n_alive: alive.len(),
        mean_welfare: mean_w,
        median_welfare: median_w,
        gini: gini(&welfares),
        log_sugar_component: log_sugar,
        log_spice_component: log_spice,
        total_pollution: landscape.total_pollution(),
    }
}
