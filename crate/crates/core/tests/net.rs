mod common;

use std::net::{SocketAddr, TcpListener};
use std::thread;
use std::time::Duration;

use common::{sample, BUYER, SELLERS};
use datavalue_core::protocol::net::{
    buyer_client, seller_client, Broker, BrokerOptions, Connection, Received,
};
use datavalue_core::protocol::wire::{codes, HelloPayload, Message, Role, VariancesPayload};
use datavalue_core::protocol::{buyer_prepare_query, run_session};
use datavalue_core::{DataMatrix, Error, ValuationConfig};

const T: Duration = Duration::from_secs(10);

fn broker(step: Duration, max: Option<usize>) -> (SocketAddr, thread::JoinHandle<datavalue_core::Result<()>>) {
    let b = Broker::bind(
        "127.0.0.1:0",
        BrokerOptions { config: ValuationConfig::default(), step_timeout: step, max_sessions: max },
    )
    .unwrap();
    let addr = b.local_addr().unwrap();
    (addr, b.spawn())
}

fn hello_seller(name: &str) -> Message {
    Message::Hello(HelloPayload { role: Role::Seller, seller: Some(name.into()), sellers: None })
}

fn expect_error(conn: &mut Connection) -> String {
    match conn.recv().unwrap() {
        Received::Message { message: Message::Error(p), .. } => p.code,
        other => panic!("expected ERROR, got {other:?}"),
    }
}

#[test]
fn loopback_self_session_scores_zero_and_one() {
    let (addr, server) = broker(T, Some(1));
    let b = sample(BUYER, 3_000, 1);
    let config = ValuationConfig::default();
    let (q, s) = buyer_prepare_query(&b, 4, &config, 9).unwrap();
    let session = q.session_id.clone();
    let bb = b.clone();
    let seller = thread::spawn(move || seller_client(addr, &session, "me", &bb, T));
    let got = buyer_client(addr, &q, &s, 1, T).unwrap();
    let mine = seller.join().unwrap().unwrap();
    assert_eq!((got[0].diversity, got[0].relevance), (0.0, 1.0));
    assert_eq!(got[0].seller.as_deref(), Some("me"));
    assert_eq!((mine.diversity, mine.relevance), (0.0, 1.0));
    assert_eq!(mine.seller, None);
    server.join().unwrap().unwrap();
}

#[test]
fn loopback_matches_in_process() {
    let (addr, server) = broker(T, Some(1));
    let config = ValuationConfig::default();
    let b = sample(BUYER, 4_000, 2);
    let s3 = sample(SELLERS[2], 4_000, 3);
    let local = run_session(&b, std::slice::from_ref(&s3), 8, &config, 5).unwrap();
    let (q, secret) = buyer_prepare_query(&b, 8, &config, 5).unwrap();
    let session = q.session_id.clone();
    let seller = thread::spawn(move || seller_client(addr, &session, "s3", &s3, T));
    let got = buyer_client(addr, &q, &secret, 1, T).unwrap();
    seller.join().unwrap().unwrap();
    assert!((got[0].diversity - local[0].report.diversity).abs() <= 1e-12);
    assert!((got[0].relevance - local[0].report.relevance).abs() <= 1e-12);
    assert_eq!(got[0].selected, local[0].report.selected_components);
    server.join().unwrap().unwrap();
}

#[test]
fn wrong_length_variances_abort_the_session() {
    let (addr, server) = broker(T, Some(1));
    let b = sample(BUYER, 1_000, 4);
    let (q, secret) = buyer_prepare_query(&b, 2, &ValuationConfig::default(), 1).unwrap();
    let session = q.session_id.clone();
    let buyer = thread::spawn(move || buyer_client(addr, &q, &secret, 2, T));

    let mut conn = Connection::connect(addr, T).unwrap();
    conn.send(&session, &hello_seller("liar")).unwrap();
    let n = match conn.recv().unwrap() {
        Received::Message { message: Message::Query(p), .. } => p.directions.len(),
        other => panic!("{other:?}"),
    };
    conn.send(&session, &Message::Variances(VariancesPayload { variances: vec![1.0; n + 1] })).unwrap();
    assert_eq!(expect_error(&mut conn), codes::PROTOCOL_VIOLATION);

    // the buyer hears about it and nobody else can join
    match buyer.join().unwrap() {
        Err(Error::ProtocolViolation(m)) => assert!(m.contains("liar"), "{m}"),
        other => panic!("{other:?}"),
    }
    let late = seller_client(addr, &session, "late", &b, Duration::from_millis(500));
    assert!(matches!(late, Err(Error::Session(_)) | Err(Error::Transport(_))), "{late:?}");
    server.join().unwrap().unwrap();
}

#[test]
fn unknown_type_and_garbage_get_errors() {
    let (addr, _server) = broker(T, None);
    let mut conn = Connection::connect(addr, T).unwrap();
    conn.send_raw(r#"{"type":"PING","session":"x","payload":{}}"#).unwrap();
    assert_eq!(expect_error(&mut conn), codes::UNKNOWN_TYPE);

    let mut conn = Connection::connect(addr, T).unwrap();
    conn.send_raw("{not json").unwrap();
    assert_eq!(expect_error(&mut conn), codes::MALFORMED);

    let mut conn = Connection::connect(addr, T).unwrap();
    conn.send("x", &Message::Variances(VariancesPayload { variances: vec![1.0] })).unwrap();
    assert_eq!(expect_error(&mut conn), codes::UNEXPECTED);
}

#[test]
fn seller_for_unknown_session_is_refused() {
    let (addr, _server) = broker(Duration::from_millis(200), None);
    let b = sample(BUYER, 500, 5);
    match seller_client(addr, "nobody", "s", &b, T) {
        Err(Error::Session(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn buyer_times_out_without_sellers() {
    let (addr, _server) = broker(Duration::from_millis(200), None);
    let b = sample(BUYER, 500, 6);
    let (q, s) = buyer_prepare_query(&b, 0, &ValuationConfig::default(), 2).unwrap();
    match buyer_client(addr, &q, &s, 1, T) {
        Err(Error::Timeout(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn concurrent_sessions_stay_apart() {
    let (addr, server) = broker(T, Some(2));
    let config = ValuationConfig::default();
    let b1 = sample(BUYER, 2_000, 10);
    let b2 = sample(SELLERS[1], 2_000, 11);
    let (q1, s1) = buyer_prepare_query(&b1, 1, &config, 21).unwrap();
    let (q2, s2) = buyer_prepare_query(&b2, 3, &config, 22).unwrap();
    assert_ne!(q1.session_id, q2.session_id);
    let handles: Vec<_> = [(q1, s1, b1), (q2, s2, b2)]
        .into_iter()
        .map(|(q, s, data)| {
            let session = q.session_id.clone();
            let buyer = thread::spawn(move || buyer_client(addr, &q, &s, 2, T));
            let sellers: Vec<_> = (0..2)
                .map(|i| {
                    let (session, data) = (session.clone(), data.clone());
                    thread::spawn(move || seller_client(addr, &session, &format!("copy{i}"), &data, T))
                })
                .collect();
            (buyer, sellers)
        })
        .collect();
    for (buyer, sellers) in handles {
        for s in sellers {
            s.join().unwrap().unwrap();
        }
        let got = buyer.join().unwrap().unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|p| (p.diversity, p.relevance) == (0.0, 1.0)));
    }
    server.join().unwrap().unwrap();
}

#[test]
fn closed_port_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let b = DataMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    assert!(matches!(
        seller_client(port, "s", "x", &b, Duration::from_secs(1)),
        Err(Error::Transport(_))
    ));
}
