mod common;

use overfit_core::agents::{AgentError, BuyHold, DoNothing, Policy, RandomAgent};
use overfit_core::trading_env::{
    run_episode, write_equity_csv, write_trades_csv, ActionVector, EnvConfig, MarketState,
    TradingEnv,
};

use common::flat_panel;

fn config(cash: f64, fee: f64) -> EnvConfig {
    EnvConfig {
        initial_cash: cash,
        fee_rate: fee,
        ..EnvConfig::default()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn buy_and_hold_compounds_without_fee() {
    let (panel, fm) = flat_panel(&[vec![100.0, 110.0, 121.0]]);
    let env = TradingEnv::new(&panel, &fm, config(1000.0, 0.0)).unwrap();
    let ep = run_episode(&env, &mut BuyHold::new(0, 0.0), 0..3).unwrap();
    assert_eq!(ep.equity.len(), 3);
    for (v, want) in ep.equity.iter().zip([1000.0, 1100.0, 1210.0]) {
        assert!(close(*v, want, 1e-9), "{v} vs {want}");
    }
    assert_eq!(ep.total_fees, 0.0);
}

#[test]
fn buy_and_hold_pays_fee_once() {
    let (panel, fm) = flat_panel(&[vec![100.0, 110.0, 121.0]]);
    let env = TradingEnv::new(&panel, &fm, config(1000.0, 0.003)).unwrap();
    let ep = run_episode(&env, &mut BuyHold::new(0, 0.003), 0..3).unwrap();
    // q = 1000 / 100.3
    assert!(close(ep.trades[0].qty, 9.970089730807578, 1e-12));
    assert!(ep.trades[0].qty * 100.0 * 1.003 <= 1000.0 * (1.0 + 1e-12));
    assert!(close(ep.equity[1], 1096.7098703888335, 1e-9));
    assert!(close(ep.equity[2], 1206.3808574277168, 1e-9));
    assert_eq!(ep.trades.len(), 1);
}

#[test]
fn do_nothing_is_flat() {
    let (panel, fm) = flat_panel(&[vec![1.0, 2.0, 0.5, 3.0], vec![9.0, 8.0, 7.0, 6.0]]);
    let env = TradingEnv::new(&panel, &fm, config(500.0, 0.003)).unwrap();
    let ep = run_episode(&env, &mut DoNothing, 0..4).unwrap();
    assert_eq!(ep.equity, vec![500.0; 4]);
    assert_eq!(ep.returns, vec![0.0; 3]);
    assert!(ep.trades.is_empty());
}

#[test]
fn oversell_is_clipped_to_holdings() {
    let (panel, fm) = flat_panel(&[vec![10.0, 10.0, 10.0]]);
    let env = TradingEnv::new(&panel, &fm, config(100.0, 0.0)).unwrap();
    let s0 = env.reset(0..3).unwrap();
    let s1 = env.step(&s0, &vec![3.0].into()).unwrap().next_state;
    let r = env.step(&s1, &vec![-5.0].into()).unwrap();
    assert_eq!(r.executed_action, vec![-3.0]);
    assert_eq!(r.next_state.holdings, vec![0.0]);
    assert!(close(r.next_state.cash, 100.0, 1e-12));
}

#[test]
fn held_position_earns_price_move() {
    let (panel, fm) = flat_panel(&[vec![100.0, 100.0, 110.0]]);
    let env = TradingEnv::new(&panel, &fm, config(100.0, 0.0)).unwrap();
    let s0 = env.reset(0..3).unwrap();
    let s1 = env.step(&s0, &vec![1.0].into()).unwrap().next_state;
    assert_eq!(s1.cash, 0.0);
    let r = env.step(&s1, &ActionVector::zeros(1)).unwrap();
    assert_eq!(r.reward, 10.0);
}

#[test]
fn non_finite_action_is_rejected() {
    let (panel, fm) = flat_panel(&[vec![1.0, 1.0]]);
    let env = TradingEnv::new(&panel, &fm, config(10.0, 0.0)).unwrap();
    let s0 = env.reset(0..2).unwrap();
    assert!(env.step(&s0, &vec![f64::NAN].into()).is_err());
    assert!(env.step(&s0, &vec![f64::INFINITY].into()).is_err());
}

struct AlwaysBuy;

impl Policy for AlwaysBuy {
    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        Ok(vec![1.0; state.n_assets()].into())
    }
}

#[test]
fn halt_liquidates_and_blocks_buys_until_index_recovers() {
    let (panel, fm) = flat_panel(&[vec![10.0; 8]]);
    let cvix = vec![50.0, 50.0, 95.0, 99.0, 90.1, 80.0, 50.0, 50.0];
    let env = TradingEnv::new(&panel, &fm, config(1000.0, 0.0))
        .unwrap()
        .with_cvix_values(cvix.clone())
        .unwrap();
    let mut state = env.reset(0..8).unwrap();
    let mut bought_at = Vec::new();
    while !state.is_terminal() {
        let halted = state.risk_halt;
        assert_eq!(halted, cvix[state.t] > 90.1);
        let r = env.step(&state, &AlwaysBuy.act(&state).unwrap()).unwrap();
        if halted {
            assert_eq!(r.next_state.holdings, vec![0.0]);
            assert!(r.executed_action[0] <= 0.0);
        } else if r.executed_action[0] > 0.0 {
            bought_at.push(state.t);
        }
        state = r.next_state;
    }
    assert_eq!(bought_at, vec![0, 1, 4, 5, 6]);
}

#[test]
fn halted_step_sells_at_current_price() {
    let (panel, fm) = flat_panel(&[vec![10.0, 12.0, 20.0]]);
    let env = TradingEnv::new(&panel, &fm, config(100.0, 0.01))
        .unwrap()
        .with_cvix_values(vec![0.0, 100.0, 0.0])
        .unwrap();
    let s0 = env.reset(0..3).unwrap();
    let s1 = env.step(&s0, &vec![5.0].into()).unwrap().next_state;
    assert!(s1.risk_halt);
    let r = env.step(&s1, &ActionVector::zeros(1)).unwrap();
    assert_eq!(r.executed_action, vec![-5.0]);
    assert!(close(r.fee_paid, 0.01 * 12.0 * 5.0, 1e-12));
    assert_eq!(r.next_state.holdings, vec![0.0]);
}

#[test]
fn missing_cvix_value_is_an_error() {
    let (panel, fm) = flat_panel(&[vec![1.0; 3]]);
    let series = overfit_core::market_data::ValueSeries {
        timestamps: vec![panel.timestamps()[0]],
        values: vec![10.0],
    };
    let env = TradingEnv::new(&panel, &fm, config(10.0, 0.0))
        .unwrap()
        .with_cvix(&series);
    let s0 = env.reset(0..3).unwrap();
    assert!(env.step(&s0, &ActionVector::zeros(1)).is_err());
}

#[test]
fn trade_log_is_deterministic_and_exports() {
    let prices: Vec<f64> = (0..40)
        .map(|t| 50.0 + (t as f64 * 0.7).sin() * 5.0)
        .collect();
    let (panel, fm) = flat_panel(&[prices.clone(), prices.iter().map(|p| 120.0 - p).collect()]);
    let env = TradingEnv::new(&panel, &fm, config(1000.0, 0.003)).unwrap();
    let a = run_episode(&env, &mut RandomAgent::new(5, 0.003), 0..40).unwrap();
    let b = run_episode(&env, &mut RandomAgent::new(5, 0.003), 0..40).unwrap();
    assert_eq!(a, b);
    assert!(!a.trades.is_empty());

    let mut buf = Vec::new();
    write_trades_csv(&mut buf, &a.trades).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("timestamp,asset,qty,price,fee\n"));
    assert_eq!(text.lines().count(), a.trades.len() + 1);

    let mut buf = Vec::new();
    write_equity_csv(&mut buf, &a.timestamps, &a.equity).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 41);
    let last: f64 = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last, a.final_value());
}
